import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqntr.errors import MissingEval, PointMismatch, TooFewSamples
from sqntr.objective import MlpObjective
from sqntr.sampling import (
    CURRENT,
    TRIAL,
    ChunkEval,
    aggregate_duplex,
    aggregate_triple,
    carry_cache,
    plain_batches,
    plan_epoch,
)


def ce(cid, loss, grad=(0.0,), at=CURRENT, it=0):
    return ChunkEval(cid, loss, np.asarray(grad, dtype=float), at, it)


def test_plan_large():
    plan = plan_epoch(60000, 500, np.random.default_rng(0))
    assert plan.n_batches == 119
    assert not plan.has_remainder
    assert all(plan.batch(j).size == 1000 for j in range(119))


def test_plan_single_duplex():
    plan = plan_epoch(10, 5, np.random.default_rng(0))
    assert plan.n_batches == 1 and not plan.is_triple(0)
    assert sorted(plan.batch(0)) == list(range(10))


def test_plan_single_triple():
    plan = plan_epoch(11, 5, np.random.default_rng(0))
    assert plan.n_batches == 1 and plan.is_triple(0)
    assert plan.remainder.size == 1
    assert sorted(plan.batch(0)) == list(range(11))


def test_plan_too_few():
    with pytest.raises(TooFewSamples):
        plan_epoch(9, 5, np.random.default_rng(0))


def test_batch_index_range():
    plan = plan_epoch(10, 5, np.random.default_rng(0))
    with pytest.raises(IndexError):
        plan.batch(1)


@given(st.integers(1, 40), st.integers(0, 200), st.integers(0, 2**32 - 1))
def test_plan_invariants(os_, extra, seed):
    n = 2 * os_ + extra
    plan = plan_epoch(n, os_, np.random.default_rng(seed))
    assert plan.n_batches == n // os_ - 1
    everything = np.concatenate(list(plan.chunks) + [plan.remainder])
    np.testing.assert_array_equal(np.sort(everything), np.arange(n))
    assert plan.has_remainder == (n % os_ != 0)
    for j in range(plan.n_batches - 1):
        shared = np.intersect1d(plan.batch(j), plan.batch(j + 1))
        np.testing.assert_array_equal(shared, np.sort(plan.chunks[j + 1]))


def test_plain_batches():
    out = plain_batches(23, 5, np.random.default_rng(0))
    assert [b.size for b in out] == [5, 5, 5, 8]
    np.testing.assert_array_equal(np.sort(np.concatenate(out)), np.arange(23))
    with pytest.raises(TooFewSamples):
        plain_batches(3, 5, np.random.default_rng(0))


def test_duplex_examples():
    assert aggregate_duplex(ce(0, 2.0), ce(1, 4.0))[0] == 3.0
    g = np.array([1.0, -2.0])
    np.testing.assert_array_equal(aggregate_duplex(ce(0, 0.0, g), ce(1, 0.0, g))[1], g)


def test_triple_examples():
    assert aggregate_triple(ce(0, 1.0), ce("R", 1.0), ce(1, 1.0), 5, 1)[0] == pytest.approx(1.0, abs=1e-15)
    assert aggregate_triple(ce(0, 2.0), ce("R", 11.0), ce(1, 4.0), 5, 1)[0] == pytest.approx(41 / 11, abs=1e-15)
    with pytest.raises(ValueError):
        aggregate_triple(ce(0, 1.0), ce("R", 1.0), ce(1, 1.0), 5, 0)


def test_point_mismatch():
    with pytest.raises(PointMismatch):
        aggregate_duplex(ce(0, 1.0), ce(1, 1.0, at=TRIAL))
    with pytest.raises(PointMismatch):
        aggregate_duplex(ce(0, 1.0, it=0), ce(1, 1.0, it=1))
    with pytest.raises(PointMismatch):
        aggregate_triple(ce(0, 1.0), ce("R", 1.0, at=TRIAL), ce(1, 1.0), 5, 1)


def _union_check(obj, plan, w):
    for j in range(plan.n_batches):
        ev = {c: ce(c, *obj.eval_batch(w, plan.chunks[c])) for c in (j, j + 1)}
        if plan.is_triple(j):
            rem = ce("R", *obj.eval_batch(w, plan.remainder))
            f, g = aggregate_triple(ev[j], rem, ev[j + 1], plan.chunk_size, plan.remainder.size)
        else:
            f, g = aggregate_duplex(ev[j], ev[j + 1])
        f_ref, g_ref = obj.eval_batch(w, plan.batch(j))
        assert abs(f - f_ref) <= 1e-12 * max(1.0, abs(f_ref))
        assert np.abs(g - g_ref).max() <= 1e-12 * max(1.0, np.abs(g_ref).max())


def test_aggregation_matches_union(rng):
    x = rng.standard_normal((53, 4))
    obj = MlpObjective(x, rng.integers(0, 3, 53), (4, 6, 3))
    w = rng.standard_normal(obj.param_dim)
    _union_check(obj, plan_epoch(53, 7, rng), w)   # triple at the end
    _union_check(obj, plan_epoch(49, 7, rng), w)   # all duplex


def test_carry_cache():
    plan = plan_epoch(20, 5, np.random.default_rng(0))
    cur = {1: ce(1, 1.0, it=3)}
    trial = {1: ce(1, 2.0, at=TRIAL, it=3)}
    got = carry_cache(plan, 0, True, trial, cur)
    assert got.loss == 2.0 and got.at == CURRENT and got.iteration == 4
    got = carry_cache(plan, 0, False, trial, cur)
    assert got.loss == 1.0 and got.at == CURRENT and got.iteration == 4
    with pytest.raises(MissingEval):
        carry_cache(plan, 1, True, trial, cur)
    with pytest.raises(IndexError):
        carry_cache(plan, 3, True, trial, cur)


def test_epochs_reshuffle():
    rng = np.random.default_rng(0)
    a = plan_epoch(30, 5, rng)
    b = plan_epoch(30, 5, rng)
    assert not all(np.array_equal(x, y) for x, y in zip(a.chunks, b.chunks))
