from itertools import permutations

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from subjectgan.distance import assignment, rank_sources, w1_estimate, w1_exact
from subjectgan.domain import Domain


def brute_force_w1(a, b):
    cost = np.linalg.norm(a[:, None] - b[None], axis=2)
    n = len(a)
    return min(cost[np.arange(n), list(p)].mean() for p in permutations(range(n)))


def test_matches_permutation_search():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n, k = rng.integers(1, 7), rng.integers(1, 4)
        a, b = rng.normal(size=(n, k)), rng.normal(size=(n, k))
        d, plan = w1_exact(a, b)
        assert d == pytest.approx(brute_force_w1(a, b), abs=1e-9)
        assert sorted(plan.pairing) == list(range(n))


def test_assignment_agrees_with_scipy_on_random_and_integer_costs():
    rng = np.random.default_rng(1)
    for n in (1, 2, 5, 17, 60):
        for cost in (rng.random((n, n)), rng.integers(0, 4, (n, n)).astype(float)):
            col = assignment(cost)
            r, c = linear_sum_assignment(cost)
            assert cost[np.arange(n), col].sum() == pytest.approx(cost[r, c].sum(), abs=1e-9)


def test_assignment_rejects_non_square_and_nonfinite():
    with pytest.raises(ValueError, match="square"):
        assignment(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="finite"):
        assignment(np.array([[0.0, np.inf], [1.0, 0.0]]))


def test_one_dimensional_sorted_coupling():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = rng.normal(size=(12, 1)), rng.normal(2, 3, size=(12, 1))
        closed = np.abs(np.sort(a[:, 0]) - np.sort(b[:, 0])).mean()
        assert w1_exact(a, b)[0] == pytest.approx(closed, abs=1e-12)


def test_simple_values():
    a = np.random.default_rng(3).normal(size=(9, 4))
    assert w1_exact(a, a)[0] == 0.0
    assert w1_exact([[0.0]], [[5.0]])[0] == 5.0
    c = np.array([3.0, -4.0, 0.0, 12.0])
    assert w1_exact(a, a + c)[0] == pytest.approx(13.0, abs=1e-12)


def test_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(4)
    for _ in range(30):
        a, b, c = (rng.normal(rng.normal(), 1, size=(7, 3)) for _ in range(3))
        ab, bc, ac = w1_exact(a, b)[0], w1_exact(b, c)[0], w1_exact(a, c)[0]
        assert ab == pytest.approx(w1_exact(b, a)[0], abs=1e-12)
        assert ac <= ab + bc + 1e-12


def test_exact_rejects_unequal_and_oversized():
    with pytest.raises(ValueError, match="unequal"):
        w1_exact(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError, match="limit"):
        w1_exact(np.zeros((1025, 1)), np.zeros((1025, 1)))
    with pytest.raises(ValueError, match="empty"):
        w1_estimate(np.zeros((0, 2)), np.zeros((3, 2)), 1)


def test_estimate_grid_and_identity():
    a = np.arange(10.0)[:, None]
    assert w1_estimate(a, a + 10, n_sub=10, n_repeats=2) == pytest.approx(10.0)
    x = np.random.default_rng(5).normal(size=(50, 3))
    assert w1_estimate(x, x.copy(), n_sub=50, n_repeats=3) == 0.0


def test_estimate_is_seed_deterministic_and_close_to_exact():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=(300, 4)), rng.normal(0.7, 1, size=(300, 4))
    assert w1_estimate(a, b, 100, 3, seed=9) == w1_estimate(a, b, 100, 3, seed=9)
    for seed in range(5):
        x, y = rng.normal(size=(200, 3)), rng.normal(1.5, 1, size=(200, 3))
        exact = w1_exact(x, y)[0]
        assert abs(w1_estimate(x, y, 150, 4, seed) - exact) < 0.1 * exact
    with pytest.raises(ValueError, match="n_sub"):
        w1_estimate(a, b, 301)


def _dom(x, sid):
    return Domain(x, np.zeros(len(x), dtype=int), sid, "source")


def test_rank_sources_by_translation():
    rng = np.random.default_rng(7)
    base = rng.normal(size=(80, 5))
    direction = rng.normal(size=5)
    direction /= np.linalg.norm(direction)
    target = _dom(base, "t")
    cands = [_dom(base + m * direction, sid) for m, sid in ((9, "c"), (1, "a"), (5, "b"))]
    ranked = rank_sources(target, cands, n_sub=80, n_repeats=1)
    assert [sid for sid, _ in ranked] == ["a", "b", "c"]
    assert rank_sources(target, [cands[0]])[0][0] == "c"
    self_first = rank_sources(target, [_dom(base + 20, "far"), _dom(base, "self")])
    assert self_first[0] == ("self", 0.0)


def test_rank_sources_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        rank_sources(_dom(np.zeros((4, 2)), "t"), [_dom(np.zeros((4, 3)), "s")])
