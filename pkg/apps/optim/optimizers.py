from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from apps.optim.domain import OptimConfig, OptimizerName


class Optimizer(ABC):
    """Optimizador sobre el vector plano de parámetros (ver PolicyParams.flatten)."""

    def __init__(self, learning_rate: float, weight_decay: float = 0.0) -> None:
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.steps = 0

    @abstractmethod
    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Devuelve θ actualizado; no modifica `theta`."""


class SGDOptimizer(Optimizer):
    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.steps += 1
        updated = theta - self.learning_rate * grad
        if self.weight_decay:
            updated -= self.learning_rate * self.weight_decay * theta
        return updated


class AdamOptimizer(Optimizer):
    """Adam con corrección de sesgo y decaimiento desacoplado."""

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ) -> None:
        super().__init__(learning_rate, weight_decay)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None or self.m.shape != grad.shape:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.steps += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.steps)
        v_hat = self.v / (1.0 - self.beta2**self.steps)
        updated = theta - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        if self.weight_decay:
            updated -= self.learning_rate * self.weight_decay * theta
        return updated


def build_optimizer(cfg: OptimConfig) -> Optimizer:
    """Optimizador con estado nuevo según `cfg.optimizer`."""
    if OptimizerName(cfg.optimizer) is OptimizerName.SGD:
        return SGDOptimizer(cfg.learning_rate, cfg.weight_decay)
    return AdamOptimizer(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
