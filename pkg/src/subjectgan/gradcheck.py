"""Central finite-difference checks of the analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)


def numerical_grad(loss_fn: Callable[[], float], t: Tensor, index, h: float = 1e-6) -> float:
    """d loss / d t[index] by central differences; ``t`` is restored afterwards."""
    old = t.data[index]
    t.data[index] = old + h
    up = loss_fn()
    t.data[index] = old - h
    down = loss_fn()
    t.data[index] = old
    return (up - down) / (2.0 * h)


def check_gradients(build_loss: Callable[[], Tensor], tensors: Sequence[Tensor], n_probe: int = 20,
                    rng: np.random.Generator | None = None, h: float = 1e-6, atol: float | None = None) -> float:
    """Largest relative error between backprop and finite differences.

    ``build_loss`` must rebuild the graph from the current tensor values and
    be free of side effects (no running-statistic updates, no fresh noise).
    Up to ``n_probe`` random coordinates of each tensor are probed. ``atol``
    is the round-off level of a central difference (default a small multiple
    of eps * |loss| / h); the relative-error denominator is floored at
    ``1e4 * atol`` so a zero gradient measured as round-off noise scores at
    most 1e-4 instead of 1.
    """
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.grad = None
    loss = build_loss()
    loss.backward()
    if atol is None:
        atol = 64 * np.finfo(np.float64).eps * max(1.0, abs(loss.item())) / h
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    value = lambda: build_loss().item()  # noqa: E731
    worst = 0.0
    for t, g in zip(tensors, analytic):
        flat = rng.choice(t.data.size, size=min(n_probe, t.data.size), replace=False)
        for f in flat:
            idx = np.unravel_index(f, t.data.shape)
            num = numerical_grad(value, t, idx, h)
            worst = max(worst, float(relative_error(g[idx], num, floor=1e4 * atol)))
    for t in tensors:
        t.grad = None
    return worst
