"""Parameter containers and the two optimizers used by the trainer."""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .tensor import Tensor

SGD_MOMENTUM = "sgd-momentum"
ADAPTIVE_MOMENTS = "adaptive-moments"


class ParamSet:
    """Named parameters of one network plus its non-trainable buffers.

    Buffers (batch-norm running statistics) are not optimized but are part
    of the network state and therefore of :meth:`digest`.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True)
        self.params[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise KeyError(f"duplicate buffer name {name!r}")
        arr = np.array(value, dtype=np.float64)
        self.buffers[name] = arr
        return arr

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grads_are_zero(self) -> bool:
        return all(p.grad is None or not np.any(p.grad) for p in self.params.values())

    @contextmanager
    def frozen(self):
        """Temporarily exclude the parameters from gradient tracking."""
        saved = {n: p.requires_grad for n, p in self.params.items()}
        for p in self.params.values():
            p.requires_grad = False
        try:
            yield self
        finally:
            for n, p in self.params.items():
                p.requires_grad = saved[n]

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {n: p.data.copy() for n, p in self.params.items()}
        out.update({n: b.copy() for n, b in self.buffers.items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.params) | set(self.buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for n, p in self.params.items():
            if state[n].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {n}: {state[n].shape} vs {p.data.shape}")
            p.data[...] = state[n]
        for n, b in self.buffers.items():
            if state[n].shape != b.shape:
                raise ValueError(f"shape mismatch for {n}: {state[n].shape} vs {b.shape}")
            b[...] = state[n]

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(self.params[name].data.tobytes())
        for name in sorted(self.buffers):
            h.update(name.encode())
            h.update(self.buffers[name].tobytes())
        return h.hexdigest()


@dataclass
class OptimizerState:
    kind: str = ADAPTIVE_MOMENTS
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        if self.kind not in (SGD_MOMENTUM, ADAPTIVE_MOMENTS):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        for name in ("momentum", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")


def sgd_momentum(lr: float = 1e-2, momentum: float = 0.9) -> OptimizerState:
    return OptimizerState(kind=SGD_MOMENTUM, lr=lr, momentum=momentum)


def adaptive_moments(lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                     eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(kind=ADAPTIVE_MOMENTS, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(params: ParamSet, state: OptimizerState) -> ParamSet:
    """Apply one update in place and clear the gradients."""
    missing = [n for n, p in params if p.grad is None]
    if missing:
        raise RuntimeError(f"no gradient for registered parameter(s): {', '.join(missing)}")
    state.t += 1
    for name, p in params:
        g = p.grad
        buf = state.buffers.get(name)
        if buf is None:
            buf = {"m": np.zeros_like(p.data)}
            if state.kind == ADAPTIVE_MOMENTS:
                buf["v"] = np.zeros_like(p.data)
            state.buffers[name] = buf
        if state.kind == SGD_MOMENTUM:
            buf["m"] *= state.momentum
            buf["m"] += g
            p.data -= state.lr * buf["m"]
        else:
            buf["m"] *= state.beta1
            buf["m"] += (1.0 - state.beta1) * g
            buf["v"] *= state.beta2
            buf["v"] += (1.0 - state.beta2) * g * g
            mhat = buf["m"] / (1.0 - state.beta1 ** state.t)
            vhat = buf["v"] / (1.0 - state.beta2 ** state.t)
            p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
        p.grad = None
    params.step += 1
    return params
