"""Gradient-descent optimizers over named parameter tensors."""

from typing import Dict, Mapping

import numpy as np

from .grad_core import Tensor

Gradients = Mapping[str, np.ndarray]


class Optimizer:
    name = "base"

    def __init__(self, lr: float):
        if not lr > 0.0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.steps = 0

    def step(self, params: Mapping[str, Tensor], grads: Gradients) -> None:
        self.steps += 1
        for name, tensor in params.items():
            grad = grads.get(name)
            if grad is None:
                grad = np.zeros_like(tensor.data)
            tensor.data = self._update(name, tensor.data, grad)

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {"opt.steps": np.array([float(self.steps)])}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        if "opt.steps" in state:
            self.steps = int(state["opt.steps"][0])


class SGD(Optimizer):
    """theta' = theta - lr * grad (descent on the loss)."""

    name = "sgd"

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return value - self.lr * grad


class Adam(Optimizer):
    name = "adam"

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        m = self.m.get(name, np.zeros_like(value))
        v = self.v.get(name, np.zeros_like(value))
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self.m[name], self.v[name] = m, v
        m_hat = m / (1.0 - self.beta1**self.steps)
        v_hat = v / (1.0 - self.beta2**self.steps)
        return value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = super().state_dict()
        for name in self.m:
            state[f"opt.m.{name}"] = self.m[name].copy()
            state[f"opt.v.{name}"] = self.v[name].copy()
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        super().load_state_dict(state)
        self.m = {k[len("opt.m.") :]: np.array(v) for k, v in state.items() if k.startswith("opt.m.")}
        self.v = {k[len("opt.v.") :]: np.array(v) for k, v in state.items() if k.startswith("opt.v.")}


def make_optimizer(kind: str, lr: float) -> Optimizer:
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")
