"""
Dense feed-forward networks on flat parameter vectors

Every network in evoloss (the meta-loss network, the classifiers being
trained and the ground-truth classifiers) is an MlpSpec plus a flat float64
vector. The layout per layer is: weight matrix row-major (rows are output
units), bias vector, then one PReLU slope when the layer is hidden and
carries one.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .errors import DimensionMismatchError, TraceMismatchError
from .models import ForwardTrace, HiddenActivation, MlpSpec, OutputActivation

PRELU_INIT = 0.25
_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class LayerSlice:
    """Offsets of one layer inside the flat parameter vector"""
    fan_in: int
    fan_out: int
    weight_start: int
    bias_start: int
    alpha_index: Optional[int]
    end: int


@lru_cache(maxsize=64)
def layer_layout(spec: MlpSpec) -> Tuple[LayerSlice, ...]:
    """Compute the per-layer offsets for a spec"""
    slices = []
    offset = 0
    for layer in range(spec.num_layers):
        fan_in, fan_out = spec.layer_dims[layer], spec.layer_dims[layer + 1]
        bias_start = offset + fan_in * fan_out
        end = bias_start + fan_out
        alpha_index = None
        if spec.has_alpha(layer):
            alpha_index = end
            end += 1
        slices.append(LayerSlice(fan_in, fan_out, offset, bias_start, alpha_index, end))
        offset = end
    return tuple(slices)


def genome_length(spec: MlpSpec) -> int:
    """Number of entries in a flat parameter vector for this spec"""
    return layer_layout(spec)[-1].end


def layer_views(spec: MlpSpec, params: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]]:
    """
    Split a flat vector into per-layer (weight, bias, alpha) views

    Args:
        spec: Network architecture
        params: Flat parameter vector

    Returns:
        One tuple per layer; the arrays share memory with params
    """
    _check_params(spec, params)
    views = []
    for s in layer_layout(spec):
        weight = params[s.weight_start:s.bias_start].reshape(s.fan_out, s.fan_in)
        bias = params[s.bias_start:s.bias_start + s.fan_out]
        alpha = None if s.alpha_index is None else params[s.alpha_index:s.alpha_index + 1]
        views.append((weight, bias, alpha))
    return views


def xavier_init(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Uniform Glorot initialization

    Weights are drawn from U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
    biases are zero and PReLU slopes start at 0.25.
    """
    params = np.zeros(genome_length(spec), dtype=np.float64)
    for s in layer_layout(spec):
        bound = np.sqrt(6.0 / (s.fan_in + s.fan_out))
        params[s.weight_start:s.bias_start] = rng.uniform(-bound, bound, size=s.fan_out * s.fan_in)
        if s.alpha_index is not None:
            params[s.alpha_index] = PRELU_INIT
    return params


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilized by subtracting the row maximum"""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def softplus(z: np.ndarray) -> np.ndarray:
    """ln(1 + e^z), floored at the smallest normal float so it stays strictly positive"""
    return np.maximum(np.logaddexp(0.0, z), _TINY)


def logistic(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(spec: MlpSpec, params: np.ndarray, batch: np.ndarray) -> Tuple[np.ndarray, ForwardTrace]:
    """
    Run a batch through the network

    Args:
        spec: Network architecture
        params: Flat parameter vector of length genome_length(spec)
        batch: K x input_dim matrix

    Returns:
        Tuple of (K x output_dim output, trace for backward)
    """
    params = np.asarray(params, dtype=np.float64)
    _check_params(spec, params)
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionMismatchError("batch shape", f"(K, {spec.input_dim})", x.shape)

    pre, post = [], [x]
    for layer, (weight, bias, alpha) in enumerate(layer_views(spec, params)):
        z = x @ weight.T + bias
        pre.append(z)
        if spec.is_hidden(layer):
            x = _hidden(spec.hidden_activation, z, _slope(alpha))
        else:
            x = _output(spec.output_activation, z)
        post.append(x)
    return x, ForwardTrace(spec=spec, param_count=params.size, pre=pre, post=post)


def backward(spec: MlpSpec, params: np.ndarray, trace: ForwardTrace, upstream_grad: np.ndarray,
             need_param_grads: bool = True) -> Tuple[Optional[np.ndarray], np.ndarray]:
    """
    Exact gradients of sum(upstream_grad * output) for a traced forward pass

    Args:
        spec: Network architecture used for the forward pass
        params: The same flat parameter vector
        trace: Trace returned by forward
        upstream_grad: K x output_dim gradient of the objective w.r.t. the output
        need_param_grads: Skip the parameter gradient when only input gradients matter

    Returns:
        Tuple of (flat parameter gradient or None, K x input_dim input gradient)
    """
    params = np.asarray(params, dtype=np.float64)
    if trace.spec != spec:
        raise TraceMismatchError("trace spec", spec.layer_dims, trace.spec.layer_dims)
    if trace.param_count != params.size:
        raise TraceMismatchError("trace parameter count", params.size, trace.param_count)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != trace.post[-1].shape:
        raise DimensionMismatchError("upstream gradient shape", trace.post[-1].shape, g.shape)

    grads = np.zeros(params.size, dtype=np.float64) if need_param_grads else None
    views = layer_views(spec, params)
    layout = layer_layout(spec)
    for layer in reversed(range(spec.num_layers)):
        weight, _, alpha = views[layer]
        z, y, x = trace.pre[layer], trace.post[layer + 1], trace.post[layer]
        s = layout[layer]

        if not spec.is_hidden(layer):
            dz = _output_grad(spec.output_activation, z, y, g)
        elif spec.hidden_activation == HiddenActivation.PRELU:
            positive = z > 0
            dz = g * np.where(positive, 1.0, _slope(alpha))
            if grads is not None and s.alpha_index is not None:
                grads[s.alpha_index] = np.sum(g * np.where(positive, 0.0, z))
        elif spec.hidden_activation == HiddenActivation.RELU:
            dz = g * (z > 0)
        else:
            dz = g

        if grads is not None:
            grads[s.weight_start:s.bias_start] = (dz.T @ x).ravel()
            grads[s.bias_start:s.bias_start + s.fan_out] = dz.sum(axis=0)
        g = dz @ weight
    return grads, g


def _check_params(spec: MlpSpec, params: np.ndarray):
    expected = genome_length(spec)
    if params.ndim != 1 or params.size != expected:
        raise DimensionMismatchError("parameter vector length", expected, params.shape)


def _slope(alpha: Optional[np.ndarray]) -> float:
    # PReLU without a learnable slope keeps the initial value
    return PRELU_INIT if alpha is None else float(alpha[0])


def _hidden(kind: HiddenActivation, z: np.ndarray, slope: float) -> np.ndarray:
    if kind == HiddenActivation.PRELU:
        return np.where(z > 0, z, slope * z)
    if kind == HiddenActivation.RELU:
        return np.maximum(z, 0.0)
    return z


def _output(kind: OutputActivation, z: np.ndarray) -> np.ndarray:
    if kind == OutputActivation.SOFTPLUS:
        return softplus(z)
    if kind == OutputActivation.SOFTMAX:
        return softmax(z)
    return z


def _output_grad(kind: OutputActivation, z: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    if kind == OutputActivation.SOFTPLUS:
        return g * logistic(z)
    if kind == OutputActivation.SOFTMAX:
        return y * (g - np.sum(g * y, axis=1, keepdims=True))
    return g
