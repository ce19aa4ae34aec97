"""
Update rules for flat parameter vectors: theta <- theta - optimizer(grad)
"""
import numpy as np

from ..core.errors import ConfigError
from ..core.models import OptimizerConfig, OptimizerKind


class SGD:
    """Plain stochastic gradient descent"""

    def __init__(self, lr: float = 0.1):
        self.lr = lr

    def step(self, params: np.ndarray, grads: np.ndarray):
        params -= self.lr * grads


class Adam:
    """Adam with bias-corrected moment estimates"""

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size, dtype=np.float64)
        self.v = np.zeros(size, dtype=np.float64)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: OptimizerConfig, size: int):
    """Build the optimizer described by cfg for a vector of the given size"""
    if cfg.learning_rate <= 0:
        raise ConfigError("optimizer.learning_rate", f"must be > 0, got {cfg.learning_rate}")
    if cfg.kind == OptimizerKind.SGD:
        return SGD(cfg.learning_rate)
    return Adam(size, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
