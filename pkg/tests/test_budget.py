import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hess import budget
from hess.budget import BudgetAllocation, InfeasibleBudgetError


def one_at_a_time_oracle(c_total, weights, c_max, max_rounds=100_000):
    """Iterate-until-convergence reference: cap a single head per round.

    The water-filling fixed point is unique (alloc_h = min(c_max, lam * w_h)
    for the lam that conserves the total), so capping order must not matter.
    """
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    alloc = c_total * w.copy()
    capped = np.zeros(w.size, dtype=bool)
    for _ in range(max_rounds):
        over = np.flatnonzero(~capped & (alloc > c_max + 1e-12))
        if over.size == 0:
            return alloc
        h = over[np.argmax(alloc[over])]
        surplus = alloc[h] - c_max
        alloc[h] = c_max
        capped[h] = True
        uncapped = ~capped
        if not uncapped.any():
            return alloc
        w_left = w[uncapped].sum()
        if w_left > 0:
            alloc[uncapped] += surplus * w[uncapped] / w_left
        else:
            alloc[uncapped] += surplus / uncapped.sum()
    raise AssertionError("oracle failed to converge")


def water_level_closed_form(c_total, weights, c_max):
    """Directly solve sum(min(c_max, lam*w_h)) = c_total over candidate cap sets."""
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    order = np.argsort(-w)
    for n_capped in range(w.size + 1):
        capped = order[:n_capped]
        uncapped = order[n_capped:]
        w_left = w[uncapped].sum()
        remaining = c_total - n_capped * c_max
        if uncapped.size == 0:
            if abs(remaining) < 1e-9:
                return np.full(w.size, float(c_max))
            continue
        if w_left <= 0:
            alloc = np.full(w.size, float(c_max))
            alloc[uncapped] = remaining / uncapped.size
            if (alloc[uncapped] <= c_max + 1e-9).all() and remaining >= -1e-9:
                return alloc
            continue
        lam = remaining / w_left
        alloc = np.minimum(c_max, lam * w)
        alloc[capped] = c_max
        ok_capped = (lam * w[capped] >= c_max - 1e-9).all() if n_capped else True
        ok_uncapped = (lam * w[uncapped] <= c_max + 1e-9).all()
        if ok_capped and ok_uncapped:
            return alloc
    raise AssertionError("no consistent cap set found")


def random_instance(rng, max_heads=32):
    n = int(rng.integers(1, max_heads + 1))
    c_max = int(rng.integers(1, 50))
    c_total = int(rng.integers(0, n * c_max + 1))
    style = rng.integers(0, 3)
    if style == 0:
        w = rng.uniform(0.0, 1.0, size=n)
    elif style == 1:
        w = rng.integers(0, 4, size=n).astype(np.float64)  # plenty of ties/zeros
    else:
        w = np.zeros(n)
        w[rng.integers(0, n)] = 1.0  # single dominant head
    if w.sum() == 0:
        w[0] = 1.0
    return c_total, w / w.sum(), c_max


# ---------------------------------------------------------------------------
# total budget and weights
# ---------------------------------------------------------------------------

def test_total_budget_sums():
    assert budget.total_budget([3, 5, 4]) == 12
    assert budget.total_budget([0, 0]) == 0
    assert budget.total_budget([7] * 6) == 42


def test_total_budget_rejects_negative_and_empty():
    with pytest.raises(ValueError):
        budget.total_budget([3, -1])
    with pytest.raises(ValueError):
        budget.total_budget([])


def test_realloc_weights_proportions():
    np.testing.assert_allclose(budget.realloc_weights([2.0, 1.0, 1.0]),
                               [0.5, 0.25, 0.25])
    np.testing.assert_allclose(budget.realloc_weights([3.0, 3.0]),
                               [0.5, 0.5])


def test_realloc_weights_zero_fallback_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="hess.budget"):
        w = budget.realloc_weights([0.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(w, [0.25] * 4)
    assert any("uniform" in r.message for r in caplog.records)


def test_realloc_weights_rejects_bad_scores():
    with pytest.raises(ValueError):
        budget.realloc_weights([1.0, -0.1])
    with pytest.raises(ValueError):
        budget.realloc_weights([1.0, np.nan])
    with pytest.raises(ValueError):
        budget.realloc_weights([])


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=16))
@settings(max_examples=100)
def test_realloc_weights_always_on_simplex(scores):
    w = budget.realloc_weights(scores)
    assert abs(w.sum() - 1.0) < 1e-12
    assert (w >= 0).all()


# ---------------------------------------------------------------------------
# waterfill worked examples
# ---------------------------------------------------------------------------

def test_waterfill_one_round_example():
    alloc = budget.waterfill(100, [0.7, 0.1, 0.1, 0.1], 40)
    assert alloc.final == (40, 20, 20, 20)
    np.testing.assert_allclose(alloc.fixed_point, [40.0, 20.0, 20.0, 20.0])
    np.testing.assert_allclose(alloc.ideal, [70.0, 10.0, 10.0, 10.0])


def test_waterfill_two_round_example():
    alloc = budget.waterfill(100, [0.6, 0.3, 0.05, 0.05], 35)
    assert alloc.final == (35, 35, 15, 15)


def test_waterfill_uniform_no_capping():
    alloc = budget.waterfill(40, [0.25] * 4, 20)
    assert alloc.final == (10, 10, 10, 10)
    assert alloc.fixed_point == alloc.ideal


def test_waterfill_infeasible_raises():
    with pytest.raises(InfeasibleBudgetError):
        budget.waterfill(100, [0.5, 0.5], 40)


def test_waterfill_rejects_bad_weights():
    with pytest.raises(ValueError):
        budget.waterfill(10, [0.9, 0.9], 40)  # off the simplex
    with pytest.raises(ValueError):
        budget.waterfill(10, [np.nan, 1.0], 40)
    with pytest.raises(ValueError):
        budget.waterfill(10, [1.2, -0.2], 40)


def test_waterfill_zero_weight_heads_get_uniform_surplus():
    alloc = budget.waterfill(10, [1.0, 0.0, 0.0], 4)
    assert alloc.final == (4, 3, 3)


def test_waterfill_exact_fit_caps_everyone():
    alloc = budget.waterfill(12, [0.8, 0.1, 0.1], 4)
    assert alloc.final == (4, 4, 4)


def test_waterfill_zero_total():
    alloc = budget.waterfill(0, [0.5, 0.5], 7)
    assert alloc.final == (0, 0)


# ---------------------------------------------------------------------------
# fixed-point properties
# ---------------------------------------------------------------------------

def test_fixed_point_matches_oracles_on_1000_instances():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        c_total, w, c_max = random_instance(rng)
        alloc = budget.waterfill(c_total, w, c_max)
        assert sum(alloc.final) == c_total
        assert max(alloc.final) <= c_max
        oracle = one_at_a_time_oracle(c_total, w, c_max)
        np.testing.assert_allclose(alloc.fixed_point, oracle, atol=1e-9)


def test_fixed_point_matches_closed_form_water_level():
    rng = np.random.default_rng(7)
    for _ in range(300):
        c_total, w, c_max = random_instance(rng)
        if (w == 0).any():
            continue  # closed form assumes positive weights
        alloc = budget.waterfill(c_total, w, c_max)
        closed = water_level_closed_form(c_total, w, c_max)
        np.testing.assert_allclose(alloc.fixed_point, closed, atol=1e-9)


def test_order_preservation_among_heads():
    rng = np.random.default_rng(8)
    for _ in range(200):
        c_total, w, c_max = random_instance(rng)
        alloc = budget.waterfill(c_total, w, c_max)
        for a in range(len(w)):
            for b in range(len(w)):
                if w[a] > w[b]:
                    assert alloc.final[a] >= alloc.final[b]


def test_idempotence_on_feasible_allocation():
    alloc = budget.waterfill(100, [0.7, 0.1, 0.1, 0.1], 40)
    implied = np.array(alloc.final) / sum(alloc.final)
    again = budget.waterfill(sum(alloc.final), implied, 40)
    assert again.final == alloc.final


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_waterfill_conservation_property(seed):
    rng = np.random.default_rng(seed)
    c_total, w, c_max = random_instance(rng)
    alloc = budget.waterfill(c_total, w, c_max)
    assert sum(alloc.final) == c_total
    assert all(0 <= c <= c_max for c in alloc.final)


def test_no_cap_case_is_largest_remainder_rounding():
    # ideal [3.6, 2.6, 1.4, 2.4] -> floors [3,2,1,2]=8, two leftovers go to
    # the two largest remainders (0.6 and 0.6, tie broken by head index)
    alloc = budget.waterfill(10, [0.36, 0.26, 0.14, 0.24], 100)
    assert alloc.final == (4, 3, 1, 2)


def test_allocation_invariants_enforced():
    with pytest.raises(ValueError):
        BudgetAllocation(ideal=(1.0, 1.0), fixed_point=(1.0, 1.0),
                         final=(1, 2), c_total=4, c_max=5)
    with pytest.raises(ValueError):
        BudgetAllocation(ideal=(6.0,), fixed_point=(6.0,), final=(6,),
                         c_total=6, c_max=5)


# ---------------------------------------------------------------------------
# allocate_layer composition
# ---------------------------------------------------------------------------

def test_allocate_layer_uniform_is_fixed_point():
    alloc = budget.allocate_layer([1.0, 1.0, 1.0], [5, 5, 5], c_max=9)
    assert alloc.final == (5, 5, 5)
    assert alloc.baselines == (5, 5, 5)


def test_allocate_layer_dominant_head_gets_cap():
    alloc = budget.allocate_layer([0.97, 0.01, 0.01, 0.01], [6, 6, 6, 6], c_max=9)
    assert alloc.final[0] == 9
    assert sum(alloc.final) == 24
    assert alloc.final[1] == alloc.final[2] == alloc.final[3] == 5


def test_allocate_layer_validates_inputs():
    with pytest.raises(ValueError):
        budget.allocate_layer([1.0, 1.0], [5], c_max=9)
    with pytest.raises(ValueError):
        budget.allocate_layer([1.0, 1.0], [5, 10], c_max=9)


def test_allocate_layer_conserves_on_random_instances():
    rng = np.random.default_rng(9)
    for _ in range(300):
        n = int(rng.integers(1, 12))
        c_max = int(rng.integers(1, 30))
        baselines = rng.integers(0, c_max + 1, size=n)
        scores = rng.uniform(0, 5, size=n)
        alloc = budget.allocate_layer(scores, baselines, c_max=c_max)
        assert sum(alloc.final) == baselines.sum()
        assert max(alloc.final) <= c_max
