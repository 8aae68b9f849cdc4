"""Parameter update rules: plain SGD and Adam.

Updates are deterministic functions of (parameters, gradients, state).
A non-finite gradient aborts the run with DivergenceError.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter
from .errors import ConfigError, DivergenceError


class SGD:
    """Vanilla gradient descent: p <- p - lr * grad."""

    def __init__(self, params, learning_rate: float = 1e-3):
        self.params: list[Parameter] = list(params)
        self.learning_rate = learning_rate

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p in self.params:
            _check_finite(p)
            p.data -= self.learning_rate * p.grad


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(
        self,
        params,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: list[Parameter] = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            _check_finite(p)
            grad = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / bias1
            v_hat = v / bias2
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def _check_finite(p: Parameter):
    if p.grad is None or not np.all(np.isfinite(p.grad)):
        raise DivergenceError(f"non-finite gradient on parameter {p.name!r}")


def make_optimizer(algorithm: str, params, learning_rate: float):
    if algorithm == "adam":
        return Adam(params, learning_rate)
    if algorithm == "sgd":
        return SGD(params, learning_rate)
    raise ConfigError(f"unknown optimizer algorithm {algorithm!r}")
