import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqntr.errors import IndexOutOfRange
from sqntr.objective import (
    CorruptedGradient,
    MlpObjective,
    QuadraticObjective,
    Rosenbrock,
    fd_check,
    quadratic_true_pairs,
)


def small_mlp(rng, n=40, layers=(6, 5, 3)):
    x = rng.standard_normal((n, layers[0]))
    labels = rng.integers(0, layers[-1], n)
    return MlpObjective(x, labels, layers)


def test_quadratic_example():
    obj = QuadraticObjective(np.eye(2), np.zeros(2), n_samples=4)
    for idx in (None, [0], [3, 1]):
        f, g = obj.eval_batch([3.0, 4.0], idx)
        assert f == 12.5
        np.testing.assert_array_equal(g, [3.0, 4.0])


def test_quadratic_rejects_asymmetric():
    with pytest.raises(ValueError):
        QuadraticObjective([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])


def test_quadratic_sample_shifts(rng):
    shifts = rng.standard_normal((5, 3))
    obj = QuadraticObjective(np.eye(3), np.zeros(3), sample_shifts=shifts)
    w = rng.standard_normal(3)
    _, g = obj.eval_batch(w, [1, 4])
    np.testing.assert_allclose(g, w + shifts[[1, 4]].mean(axis=0))


def test_index_errors():
    obj = QuadraticObjective(np.eye(2), np.zeros(2), n_samples=3)
    with pytest.raises(IndexOutOfRange):
        obj.eval_batch([0.0, 0.0], [3])
    with pytest.raises(IndexOutOfRange):
        obj.eval_batch([0.0, 0.0], [-1])
    with pytest.raises(ValueError):
        obj.eval_batch([0.0, 0.0], [])
    with pytest.raises(ValueError):
        obj.eval_batch([0.0], None)


def test_rosenbrock_minimum():
    f, g = Rosenbrock().eval_batch([1.0, 1.0])
    assert f == 0.0
    np.testing.assert_array_equal(g, [0.0, 0.0])
    assert Rosenbrock().loss([-1.2, 1.0]) == pytest.approx(24.2)


def test_mlp_param_dim(rng):
    obj = MlpObjective(np.zeros((2, 784)), [0, 1], (784, 32, 10))
    assert obj.param_dim == 784 * 32 + 32 + 32 * 10 + 10
    assert obj.init_params(0).shape == (obj.param_dim,)


def test_mlp_uniform_logits_give_log_c(rng):
    obj = small_mlp(rng, layers=(6, 5, 10))
    w = obj.init_params(1)
    (w2, b2) = obj.unpack(w)[-1]
    w2[:] = 0.0
    b2[:] = 0.0
    assert obj.loss(w) == pytest.approx(math.log(10), abs=1e-15)


def test_mlp_batch_mean_of_sample_losses(rng):
    obj = small_mlp(rng)
    w = rng.standard_normal(obj.param_dim) * 0.5
    idx = rng.choice(obj.n_samples, 8, replace=False)
    singles = [obj.loss(w, [i]) for i in idx]
    assert abs(obj.loss(w, idx) - np.mean(singles)) < 1e-12
    np.testing.assert_allclose(obj.sample_losses(w, idx), [obj.loss(w, [i]) for i in np.sort(idx)], rtol=1e-14)


def test_mlp_duplicate_samples_invariant(rng):
    obj = small_mlp(rng)
    w = rng.standard_normal(obj.param_dim) * 0.5
    idx = np.arange(10)
    assert abs(obj.loss(w, np.concatenate([idx, idx])) - obj.loss(w, idx)) < 1e-12


def test_eval_order_independent_bitwise(rng):
    obj = small_mlp(rng)
    w = rng.standard_normal(obj.param_dim)
    idx = rng.choice(obj.n_samples, 12, replace=False)
    f1, g1 = obj.eval_batch(w, idx)
    f2, g2 = obj.eval_batch(w, idx[::-1])
    assert f1 == f2
    np.testing.assert_array_equal(g1, g2)


def test_mlp_validation():
    with pytest.raises(ValueError):
        MlpObjective(np.zeros((2, 3)), [0, 1], (4, 2))
    with pytest.raises(ValueError):
        MlpObjective(np.zeros((2, 4)), [0, 2], (4, 2))


def test_mlp_accuracy_range(rng):
    obj = small_mlp(rng)
    acc = obj.accuracy(obj.init_params(0))
    assert 0.0 <= acc <= 100.0
    assert math.isnan(QuadraticObjective(np.eye(2), np.zeros(2)).accuracy(np.zeros(2)))


def test_fd_quadratic(rng):
    h = rng.standard_normal((6, 6))
    obj = QuadraticObjective(h + h.T, rng.standard_normal(6))
    assert fd_check(obj, rng.standard_normal(6)) < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_fd_rosenbrock(seed):
    w = np.random.default_rng(seed).uniform(-2, 2, 2)
    assert fd_check(Rosenbrock(), w, h=1e-6) < 1e-5


def test_fd_mlp_random_point(rng):
    obj = small_mlp(rng)
    for seed in range(20):
        w = np.random.default_rng(seed).standard_normal(obj.param_dim)
        assert fd_check(obj, w, seed=seed) < 1e-5


def test_fd_catches_corruption(rng):
    obj = small_mlp(rng)
    w = rng.standard_normal(obj.param_dim)
    _, g = obj.eval_batch(w)
    j = int(np.argmax(np.abs(g)))
    assert fd_check(CorruptedGradient(obj, j, 2.0), w, coords=[j]) > 0.4


def test_fd_validation():
    with pytest.raises(ValueError):
        fd_check(Rosenbrock(), [0.0, 0.0], h=0.0)


def test_true_pairs():
    pairs = quadratic_true_pairs(np.diag([1.0, 2.0]), [[0.0, 1.0]])
    np.testing.assert_array_equal(pairs[0][1], [0.0, 2.0])
    for _, y in quadratic_true_pairs(np.zeros((3, 3)), np.eye(3)):
        np.testing.assert_array_equal(y, 0.0)


def test_true_pairs_random(rng):
    h = rng.standard_normal((4, 4))
    h = h + h.T
    steps = rng.standard_normal((3, 4))
    for s, (s2, y) in zip(steps, quadratic_true_pairs(h, steps)):
        np.testing.assert_array_equal(y, h @ s)
