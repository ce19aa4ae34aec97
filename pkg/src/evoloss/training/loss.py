"""
Loss functions evaluated on classifier predictions

All gradients are taken with respect to the prediction vector (the
classifier's softmax output); the inner loop chains them through the
classifier with nn.backward.
"""
from typing import Tuple

import numpy as np

from ..core import nn
from ..core.errors import DimensionMismatchError
from ..core.models import LossKind, LossType, MLN_SPEC, MlpSpec

CE_CLAMP = 1e-12


def mln_inputs(p_true: np.ndarray, p_false: np.ndarray) -> np.ndarray:
    """Assemble rows [p_true, p_false, 1, 0]"""
    p_true = np.atleast_1d(np.asarray(p_true, dtype=np.float64))
    p_false = np.atleast_1d(np.asarray(p_false, dtype=np.float64))
    rows = np.empty((p_true.size, 4), dtype=np.float64)
    rows[:, 0] = p_true
    rows[:, 1] = p_false
    rows[:, 2] = 1.0
    rows[:, 3] = 0.0
    return rows


def mln_pairs(params: np.ndarray, p_true: np.ndarray, p_false: np.ndarray,
              spec: MlpSpec = MLN_SPEC, need_grad: bool = True):
    """
    Evaluate the MLN on many (p_true, p_false) pairs at once

    Returns:
        Tuple of (values, g_true, g_false); the gradients are None when need_grad is False
    """
    if spec.input_dim != 4 or spec.output_dim != 1:
        raise DimensionMismatchError("MLN spec input/output", "(4, 1)", (spec.input_dim, spec.output_dim))
    out, trace = nn.forward(spec, params, mln_inputs(p_true, p_false))
    values = out[:, 0]
    if not need_grad:
        return values, None, None
    _, input_grads = nn.backward(spec, params, trace, np.ones_like(out), need_param_grads=False)
    return values, input_grads[:, 0], input_grads[:, 1]


def mln_value(params: np.ndarray, p_true: float, p_false: float, spec: MlpSpec = MLN_SPEC) -> float:
    """MLN([p_true, p_false, 1, 0])"""
    values, _, _ = mln_pairs(params, p_true, p_false, spec, need_grad=False)
    return float(values[0])


def mln_grad(params: np.ndarray, p_true: float, p_false: float,
             spec: MlpSpec = MLN_SPEC) -> Tuple[float, float]:
    """Gradient of mln_value w.r.t. p_true and p_false"""
    _, g_true, g_false = mln_pairs(params, p_true, p_false, spec)
    return float(g_true[0]), float(g_false[0])


def ce_value(probs: np.ndarray, true_class: int) -> float:
    """-ln(probs[true_class]) with the probability clamped at 1e-12"""
    probs = np.asarray(probs, dtype=np.float64)
    _check_class(probs, true_class)
    return float(-np.log(max(probs[true_class], CE_CLAMP)))


def ce_grad(probs: np.ndarray, true_class: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    _check_class(probs, true_class)
    grad = np.zeros_like(probs)
    grad[true_class] = -1.0 / max(probs[true_class], CE_CLAMP)
    return grad


def mse_value(probs: np.ndarray, onehot: np.ndarray) -> float:
    """Mean over components of the squared difference"""
    probs, onehot = _check_pair(probs, onehot)
    return float(np.mean((probs - onehot) ** 2))


def mse_grad(probs: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    probs, onehot = _check_pair(probs, onehot)
    return 2.0 * (probs - onehot) / probs.size


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.size, num_classes), dtype=np.float64)
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


def multiclass_batch_loss(predictions: np.ndarray, labels: np.ndarray,
                          kind: LossKind, need_grad: bool = True) -> Tuple[float, np.ndarray]:
    """
    Batch loss and its gradient w.r.t. the K x n prediction matrix

    For the MLN every sample contributes one term per wrong class,
    MLN([p_true, p_wrong_i, 1, 0]), and the sum is normalized by K(n - 1).
    Cross-entropy and MSE are batch means of the per-sample losses against
    one-hot labels.

    Args:
        predictions: K x n matrix of class probabilities
        labels: K true class indices
        kind: Loss to apply
        need_grad: Skip the gradient computation

    Returns:
        Tuple of (value, K x n gradient or None)
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.ndim != 2 or predictions.shape[1] < 2:
        raise DimensionMismatchError("prediction matrix", "(K, n >= 2)", predictions.shape)
    k, n = predictions.shape
    if labels.shape != (k,):
        raise DimensionMismatchError("label vector", (k,), labels.shape)
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise DimensionMismatchError("label range", f"[0, {n})", (int(labels.min()), int(labels.max())))
    rows = np.arange(k)

    if kind.type == LossType.MLN:
        wrong = np.ones((k, n), dtype=bool)
        wrong[rows, labels] = False
        # row-major nonzero keeps each sample's wrong classes together and ordered
        wrong_cols = np.nonzero(wrong)[1].reshape(k, n - 1)
        p_true = np.repeat(predictions[rows, labels], n - 1)
        p_false = predictions[rows[:, None], wrong_cols].ravel()
        values, g_true, g_false = mln_pairs(kind.params, p_true, p_false, kind.spec, need_grad)
        scale = 1.0 / (k * (n - 1))
        value = float(np.sum(values) * scale)
        if not need_grad:
            return value, None
        grad = np.zeros_like(predictions)
        grad[rows, labels] = g_true.reshape(k, n - 1).sum(axis=1) * scale
        grad[rows[:, None], wrong_cols] = g_false.reshape(k, n - 1) * scale
        return value, grad

    if kind.type == LossType.CROSS_ENTROPY:
        picked = np.maximum(predictions[rows, labels], CE_CLAMP)
        value = float(np.mean(-np.log(picked)))
        if not need_grad:
            return value, None
        grad = np.zeros_like(predictions)
        grad[rows, labels] = -1.0 / (picked * k)
        return value, grad

    target = one_hot(labels, n)
    diff = predictions - target
    value = float(np.mean(diff ** 2))
    if not need_grad:
        return value, None
    return value, 2.0 * diff / (k * n)


def check_loss_kind(kind: LossKind):
    """Validate that an MLN loss carries parameters for its spec"""
    if kind.type != LossType.MLN:
        return
    if kind.params is None:
        raise DimensionMismatchError("MLN parameters", nn.genome_length(kind.spec), None)
    expected = nn.genome_length(kind.spec)
    if kind.params.size != expected:
        raise DimensionMismatchError("MLN parameter vector length", expected, kind.params.size)


def _check_class(probs: np.ndarray, true_class: int):
    if not 0 <= int(true_class) < probs.size:
        raise DimensionMismatchError("class index", f"[0, {probs.size})", true_class)


def _check_pair(probs, onehot):
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape:
        raise DimensionMismatchError("onehot length", probs.shape, onehot.shape)
    return probs, onehot
