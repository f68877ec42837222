import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lossdfl.errors import IncompatibleModelsError
from lossdfl.model import ParameterVector
from lossdfl.protocol import Delivery, RoundPlan, aggregate, correction_term, plan_sharing, select_best

from oracles import brute_force_plan, mean_vectors

TAG = ("softmax", (1, 2))


def pv(values, tag=TAG):
    return ParameterVector(np.asarray(values, dtype=float), tag)


def test_select_best():
    assert select_best({0: 0.5, 1: 0.7, 2: 0.3}, 1) == [2]
    assert select_best({0: 0.5, 1: 0.5}, 1) == [0]
    assert select_best({3: 0.1, 1: 0.1, 2: 0.05}, 3) == [2, 1, 3]
    assert select_best({0: 0.5, 1: 0.7}, 10) == [0, 1]
    with pytest.raises(ValueError):
        select_best({}, 1)


def test_plan_single_best():
    plan = plan_sharing({0: 0.5, 1: 0.7, 2: 0.3}, 1)
    assert plan.best_ids == (2,)
    assert {k: plan.senders_for(k) for k in range(3)} == {0: (2,), 1: (2,), 2: ()}


def test_plan_equal_losses_share_nothing():
    plan = plan_sharing({k: 0.4 for k in range(5)}, 3)
    assert all(v == () for v in plan.deliveries.values())


def test_plan_two_best():
    plan = plan_sharing({0: 0.2, 1: 0.3, 2: 0.9}, 2, {0: 0.1, 1: 0.15, 2: 0.8})
    assert plan.best_ids == (0, 1)
    assert {k: plan.senders_for(k) for k in range(3)} == {0: (), 1: (0,), 2: (0, 1)}
    assert plan.deliveries[2] == (Delivery(0, 0.2, 0.1), Delivery(1, 0.3, 0.15))


def test_plan_needs_two_clients():
    with pytest.raises(ValueError):
        plan_sharing({0: 0.1}, 1)


def test_plan_with_all_best_is_the_pairwise_rule():
    rng = random.Random(1)
    losses = {k: rng.random() for k in range(7)}
    plan = plan_sharing(losses, 7)
    for j in losses:
        assert set(plan.senders_for(j)) == {k for k in losses if losses[j] > losses[k]}


loss_tables = st.integers(2, 18).flatmap(
    lambda c: st.tuples(
        st.lists(st.sampled_from([0.1, 0.2, 0.3, 0.5]) | st.floats(0, 5), min_size=c, max_size=c),
        st.integers(1, c),
    )
)


@settings(max_examples=150, deadline=None)
@given(loss_tables)
def test_plan_invariants(case):
    values, n_best = case
    losses = dict(enumerate(values))
    plan = plan_sharing(losses, n_best)
    best, deliveries = brute_force_plan(losses, n_best)
    assert list(plan.best_ids) == best
    assert {k: list(plan.senders_for(k)) for k in losses} == deliveries
    assert plan == plan_sharing(losses, n_best)
    for k, received in plan.deliveries.items():
        assert len(received) <= min(n_best, len(losses) - 1)
        for d in received:
            assert d.sender_id != k and d.sender_id in plan.best_ids
            assert d.sender_val_loss < losses[k]
    argmin = plan.best_ids[0]
    assert plan.deliveries[argmin] == ()
    if n_best == 1:
        for k in losses:
            expect = (argmin,) if losses[k] > losses[argmin] else ()
            assert plan.senders_for(k) == expect


def test_aggregate_mean():
    out = aggregate(pv([0, 2]), [pv([4, 6])])
    assert out.values.tolist() == [2.0, 4.0]


def test_aggregate_with_nothing_returns_own():
    own = pv([0.1, 0.7])
    out = aggregate(own, [])
    assert out is own


def test_aggregate_rejects_mismatched_tags():
    with pytest.raises(IncompatibleModelsError):
        aggregate(pv([1, 2]), [pv([1, 2], ("mlp", (1, 2)))])


def test_aggregate_matches_independent_sum():
    rng = np.random.default_rng(0)
    own = pv(rng.normal(0, 3, 50))
    received = [pv(rng.normal(0, 3, 50)) for _ in range(4)]
    expect = mean_vectors([own.values] + [r.values for r in received])
    np.testing.assert_allclose(aggregate(own, received).values, expect, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    count=st.integers(1, 6),
    scale=st.sampled_from([1e-3, 1.0, 1e3]),
)
def test_aggregate_algebra(seed, count, scale):
    rng = np.random.default_rng(seed)
    own = pv(rng.normal(0, scale, 12))
    received = [pv(rng.normal(0, scale, 12)) for _ in range(count)]
    out = aggregate(own, received)
    for perm in (received[::-1], received[1:] + received[:1]):
        assert aggregate(own, perm).values.tobytes() == out.values.tobytes()
    assert aggregate(own, [own] * count).values.tobytes() == own.values.tobytes()


def test_aggregate_of_copies_is_exact_for_awkward_values():
    own = pv([0.1, 1 / 3, 1e-300, -7.7])
    assert aggregate(own, [own, own]).values.tobytes() == own.values.tobytes()


def test_correction_term():
    deliveries = [Delivery(1, 0.2, 0.05), Delivery(2, 0.4, 0.15)]
    assert correction_term(deliveries, "val") == pytest.approx(0.3, abs=1e-15)
    assert correction_term(deliveries, "train") == pytest.approx(0.1, abs=1e-15)
    assert correction_term([], "val") == 0.0
    assert correction_term([], "train") == 0.0


def test_correction_term_five_senders():
    train = [0.11, 0.52, 0.33, 0.07, 0.9]
    deliveries = [Delivery(i, 1.0, t) for i, t in enumerate(train)]
    hand = (0.11 + 0.52 + 0.33 + 0.07 + 0.9) / 5
    assert correction_term(deliveries, "train") == pytest.approx(hand, rel=1e-15)


def test_correction_term_needs_train_losses_for_train_source():
    plan = plan_sharing({0: 0.1, 1: 0.2}, 1)
    assert correction_term(plan.deliveries[1], "val") == pytest.approx(0.1)
    with pytest.raises(ValueError):
        correction_term(plan.deliveries[1], "train")
    with pytest.raises(ValueError):
        correction_term([], "test")


def test_empty_plan():
    plan = RoundPlan.empty(range(3))
    assert plan.best_ids == () and all(plan.senders_for(k) == () for k in range(3))
    assert not math.isnan(correction_term(plan.deliveries[0]))
