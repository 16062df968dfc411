"""Empirical Wasserstein-1 distance between equally sized point clouds.

Between two uniform empirical measures with the same number of atoms the
optimal coupling is a permutation, so the distance is the mean cost of a
min-cost perfect matching on the Euclidean cost matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_EXACT_N = 1024


@dataclass(frozen=True)
class TransportPlan:
    pairing: np.ndarray  # pairing[i] = index of the target point matched to source point i
    cost: float


def assignment(cost: np.ndarray) -> np.ndarray:
    """Min-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with row/column potentials, O(n^3). Returns
    ``col`` with ``col[i]`` the column assigned to row ``i``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = cost

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    col = np.empty(n, dtype=np.int64)
    col[p[1:] - 1] = np.arange(n)
    return col


def pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean cost matrix from explicit differences (no cancellation near zero)."""
    out = np.empty((len(a), len(b)))
    step = max(1, (1 << 22) // max(1, len(b) * a.shape[1]))
    for i in range(0, len(a), step):
        out[i:i + step] = np.sqrt(((a[i:i + step, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    return out


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty point set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def w1_exact(a, b) -> tuple[float, TransportPlan]:
    """Exact empirical W1 between two point sets of equal size (n <= 1024)."""
    a, b = _check_pair(a, b)
    if len(a) != len(b):
        raise ValueError(f"unequal sample counts {len(a)} and {len(b)}; subsample to a common size")
    if len(a) > MAX_EXACT_N:
        raise ValueError(f"n={len(a)} exceeds the exact-solver limit of {MAX_EXACT_N}")
    cost = pairwise_euclidean(a, b)
    col = assignment(cost)
    d = float(cost[np.arange(len(a)), col].mean())
    return d, TransportPlan(pairing=col, cost=d)


def w1_estimate(a, b, n_sub: int = 256, n_repeats: int = 8, seed=0) -> float:
    """Mean exact W1 over ``n_repeats`` balanced random subsamples of size ``n_sub``."""
    a, b = _check_pair(a, b)
    if n_sub < 1 or n_repeats < 1:
        raise ValueError("n_sub and n_repeats must be positive")
    if n_sub > min(len(a), len(b)):
        raise ValueError(f"n_sub={n_sub} exceeds the smaller domain size {min(len(a), len(b))}")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_repeats):
        ia = rng.choice(len(a), n_sub, replace=False)
        ib = rng.choice(len(b), n_sub, replace=False)
        total += w1_exact(a[ia], b[ib])[0]
    return total / n_repeats


def rank_sources(target, candidates: Sequence, n_sub: int = 256, n_repeats: int = 8,
                 seed=0) -> list[tuple[str, float]]:
    """Order candidate source domains by ascending estimated W1 to the target.

    ``n_sub`` is clipped to the smallest domain involved. Ties keep subject-id order.
    """
    if not candidates:
        raise ValueError("no candidate domains")
    dims = {target.features.shape[1]} | {c.features.shape[1] for c in candidates}
    if len(dims) != 1:
        raise ValueError(f"feature dimension mismatch among domains: {sorted(dims)}")
    out = []
    for cand in candidates:
        n = min(n_sub, len(cand.features), len(target.features))
        out.append((cand.subject_id, w1_estimate(cand.features, target.features, n, n_repeats, seed)))
    return sorted(out, key=lambda t: (t[1], str(t[0])))
