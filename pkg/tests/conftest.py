"""
Shared fixtures and helpers for the evoloss tests
"""
import os
import sys

import numpy as np
import pytest

ROOT = os.path.join(os.path.dirname(__file__), '..')

# Add src and the repository root to path for imports
sys.path.insert(0, os.path.join(ROOT, 'src'))
sys.path.insert(0, ROOT)

from evoloss.core.models import (  # noqa: E402
    ClassifierKind, EsConfig, HiddenActivation, InnerConfig, MlpSpec, OptimizerConfig,
    OutputActivation, TaskConfig,
)
from evoloss.core import nn  # noqa: E402

FD_STEP = 1e-5
FD_TOLERANCE = 1e-5

# Single-layer [4, 1] SoftPlus network with W = [1, -1, 0, 0], b = 0:
# MLN([p_true, p_false, 1, 0]) = ln(1 + exp(p_true - p_false))
TOY_MLN_SPEC = MlpSpec((4, 1), HiddenActivation.IDENTITY, OutputActivation.SOFTPLUS)
TOY_MLN_PARAMS = np.array([1.0, -1.0, 0.0, 0.0, 0.0])


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error with a floor for vanishing gradients"""
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def activation_pattern(spec: MlpSpec, params: np.ndarray, batch: np.ndarray) -> tuple:
    """Signs of every hidden pre-activation; FD across a kink is meaningless"""
    _, trace = nn.forward(spec, params, batch)
    return tuple((z > 0).tobytes() for layer, z in enumerate(trace.pre) if spec.is_hidden(layer))


def central_difference(fn, x: np.ndarray, indices=None, h: float = FD_STEP):
    """
    Central finite differences of a scalar function

    Args:
        fn: Scalar function of x
        x: Point to differentiate at (not modified)
        indices: Coordinates to perturb; all when None

    Returns:
        Tuple of (gradient estimates for the chosen indices, indices)
    """
    flat = np.array(x, dtype=np.float64).ravel()
    indices = np.arange(flat.size) if indices is None else np.asarray(indices)
    grads = np.empty(indices.size)
    for k, i in enumerate(indices):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += h
        minus[i] -= h
        grads[k] = (fn(plus.reshape(np.shape(x))) - fn(minus.reshape(np.shape(x)))) / (2 * h)
    return grads, indices


@pytest.fixture
def toy_mln():
    """(spec, params) of the closed-form toy meta-loss network"""
    return TOY_MLN_SPEC, TOY_MLN_PARAMS.copy()


@pytest.fixture
def tiny_task_config():
    """Task sizes small enough for unit tests"""
    return TaskConfig(master_train_size=2000, master_val_size=1000,
                      task_train_size=400, task_val_size=200)


@pytest.fixture
def tiny_inner_config():
    return InnerConfig(classifier=ClassifierKind.LINEAR,
                       optimizer=OptimizerConfig(learning_rate=0.1),
                       batch_size=50, steps=20)


@pytest.fixture
def tiny_es_config(tiny_task_config, tiny_inner_config):
    """Two generations of a 3 + 3 strategy on small tasks"""
    return EsConfig(generations=2, mu=3, lam=3, master_seed=5,
                    inner=tiny_inner_config, task=tiny_task_config)
