"""Finite-sum objectives ``F(w) = (1/N) sum_i L_i(w)`` with subsampled evaluation."""
import math

import numpy as np

from .errors import IndexOutOfRange


class ObjectiveOracle:
    """Base class: subclasses implement :meth:`_eval` on a sorted index array.

    ``eval_batch`` returns the mean loss and mean gradient over the index
    multiset. Indices are sorted first so the reduction order never depends on
    how the caller ordered them.
    """

    param_dim: int
    n_samples: int

    def eval_batch(self, w, indices=None):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.param_dim,):
            raise ValueError(f"expected {self.param_dim} parameters, got shape {w.shape}")
        idx = self._check_indices(indices)
        return self._eval(w, idx)

    def loss(self, w, indices=None):
        return self.eval_batch(w, indices)[0]

    def _check_indices(self, indices):
        if indices is None:
            return np.arange(self.n_samples)
        idx = np.sort(np.asarray(indices, dtype=np.int64).ravel(), kind="stable")
        if idx.size == 0:
            raise ValueError("empty index set")
        if idx[0] < 0 or idx[-1] >= self.n_samples:
            raise IndexOutOfRange(f"indices must lie in [0, {self.n_samples})")
        return idx

    def _eval(self, w, idx):
        raise NotImplementedError

    def accuracy(self, w, indices=None):
        """Classification accuracy in percent; NaN for non-classifiers."""
        return math.nan


def eval_batch(obj, w, indices=None):
    return obj.eval_batch(w, indices)


class QuadraticObjective(ObjectiveOracle):
    """``L_i(w) = 0.5 w^T H w + (g + c_i)^T w``.

    With ``sample_shifts`` omitted every sample is identical, so subsampled
    gradients carry no noise.
    """

    def __init__(self, h, g, n_samples=1, sample_shifts=None):
        h = np.asarray(h, dtype=float)
        g = np.asarray(g, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or g.shape != (h.shape[0],):
            raise ValueError("H must be n x n and g of length n")
        if not np.array_equal(h, h.T):
            raise ValueError("H must be symmetric")
        self.h = h
        self.g = g
        self.param_dim = h.shape[0]
        if sample_shifts is not None:
            sample_shifts = np.asarray(sample_shifts, dtype=float)
            if sample_shifts.shape[1] != self.param_dim:
                raise ValueError("sample_shifts must have one row of length n per sample")
            n_samples = sample_shifts.shape[0]
        self.shifts = sample_shifts
        self.n_samples = int(n_samples)

    def _eval(self, w, idx):
        lin = self.g if self.shifts is None else self.g + self.shifts[idx].mean(axis=0)
        hw = self.h @ w
        return float(0.5 * w @ hw + lin @ w), hw + lin


class Rosenbrock(ObjectiveOracle):
    """``100 (w2 - w1^2)^2 + (1 - w1)^2``; a single sample."""

    param_dim = 2
    n_samples = 1

    def _eval(self, w, idx):
        a = w[1] - w[0] ** 2
        f = 100.0 * a * a + (1.0 - w[0]) ** 2
        grad = np.array([-400.0 * w[0] * a - 2.0 * (1.0 - w[0]), 200.0 * a])
        return float(f), grad


def glorot_uniform(rng, fan_in, fan_out):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


class MlpObjective(ObjectiveOracle):
    """Fully connected ReLU network with a softmax cross-entropy loss.

    Parameters are flattened layer by layer as ``W1, b1, W2, b2, ...`` with
    each ``W`` of shape ``(fan_in, fan_out)`` in row-major order.

    Parameters
    ----------
    x : ndarray, shape (N, d)
        Inputs, one row per sample.
    labels : ndarray of int, shape (N,)
        Class labels in ``[0, C)``.
    layers : sequence of int
        Layer widths, input first and class count last.
    """

    def __init__(self, x, labels, layers=(784, 32, 10)):
        x = np.asarray(x, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        layers = tuple(int(v) for v in layers)
        if len(layers) < 2:
            raise ValueError("need at least an input and an output layer")
        if x.ndim != 2 or x.shape[1] != layers[0]:
            raise ValueError(f"inputs must have shape (N, {layers[0]})")
        if labels.shape != (x.shape[0],):
            raise ValueError("one label per input row")
        if labels.size and (labels.min() < 0 or labels.max() >= layers[-1]):
            raise ValueError(f"labels must lie in [0, {layers[-1]})")
        self.x = x
        self.labels = labels
        self.layers = layers
        self.n_samples = x.shape[0]
        self.shapes = [(a, b) for a, b in zip(layers[:-1], layers[1:])]
        self.param_dim = sum(a * b + b for a, b in self.shapes)

    def unpack(self, w):
        out = []
        pos = 0
        for a, b in self.shapes:
            weight = w[pos:pos + a * b].reshape(a, b)
            pos += a * b
            out.append((weight, w[pos:pos + b]))
            pos += b
        return out

    def init_params(self, seed=0):
        """Glorot-uniform weights and zero biases from a seeded generator."""
        rng = np.random.default_rng(seed)
        parts = []
        for a, b in self.shapes:
            parts.append(glorot_uniform(rng, a, b).ravel())
            parts.append(np.zeros(b))
        return np.concatenate(parts)

    def _forward(self, w, idx):
        acts = [self.x[idx]]
        params = self.unpack(w)
        for i, (weight, bias) in enumerate(params):
            z = acts[-1] @ weight + bias
            acts.append(np.maximum(z, 0.0) if i < len(params) - 1 else z)
        return params, acts

    def sample_losses(self, w, indices=None):
        """Per-sample cross-entropy losses in ascending index order."""
        w = np.asarray(w, dtype=float)
        idx = self._check_indices(indices)
        _, acts = self._forward(w, idx)
        return self._losses(acts[-1], idx)[0]

    def _losses(self, logits, idx):
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        total = expz.sum(axis=1)
        rows = np.arange(idx.size)
        losses = np.log(total) - shifted[rows, self.labels[idx]]
        return losses, expz / total[:, None]

    def _eval(self, w, idx):
        params, acts = self._forward(w, idx)
        losses, probs = self._losses(acts[-1], idx)
        m = idx.size
        delta = probs
        delta[np.arange(m), self.labels[idx]] -= 1.0
        delta /= m
        grads = []
        for i in range(len(params) - 1, -1, -1):
            weight, _ = params[i]
            grads.append((acts[i].T @ delta, delta.sum(axis=0)))
            if i:
                delta = (delta @ weight.T) * (acts[i] > 0)
        flat = []
        for gw, gb in reversed(grads):
            flat.append(gw.ravel())
            flat.append(gb)
        return float(losses.sum() / m), np.concatenate(flat)

    def predict(self, w, indices=None):
        idx = self._check_indices(indices)
        _, acts = self._forward(np.asarray(w, dtype=float), idx)
        return acts[-1].argmax(axis=1)

    def accuracy(self, w, indices=None):
        idx = self._check_indices(indices)
        return 100.0 * float(np.mean(self.predict(w, idx) == self.labels[idx]))


def fd_check(obj, w, h=1e-5, n_coords=50, seed=0, indices=None, coords=None, floor=1e-12):
    """Largest relative gap between the analytic gradient and central differences.

    Coordinates are ``coords`` if given, else ``n_coords`` drawn without
    replacement. The relative error of a coordinate is
    ``|a - d| / max(|a|, |d|, floor)``; the floor only matters when both
    values vanish (e.g. weights of a dead hidden unit).
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    w = np.asarray(w, dtype=float)
    _, grad = obj.eval_batch(w, indices)
    if coords is None:
        rng = np.random.default_rng(seed)
        coords = rng.choice(obj.param_dim, size=min(n_coords, obj.param_dim), replace=False)
    worst = 0.0
    for j in np.asarray(coords, dtype=np.int64):
        e = np.zeros_like(w)
        e[j] = h
        fd = (obj.loss(w + e, indices) - obj.loss(w - e, indices)) / (2.0 * h)
        err = abs(grad[j] - fd) / max(abs(grad[j]), abs(fd), floor)
        worst = max(worst, err)
    return worst


class CorruptedGradient(ObjectiveOracle):
    """Wraps an objective and multiplies one gradient coordinate by ``factor``."""

    def __init__(self, inner, coord, factor=2.0):
        self.inner = inner
        self.coord = int(coord)
        self.factor = float(factor)
        self.param_dim = inner.param_dim
        self.n_samples = inner.n_samples

    def _eval(self, w, idx):
        f, g = self.inner._eval(w, idx)
        g = g.copy()
        g[self.coord] *= self.factor
        return f, g


def quadratic_true_pairs(h, steps):
    """Curvature pairs ``(s, H s)`` of a quadratic."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or not np.array_equal(h, h.T):
        raise ValueError("H must be a symmetric matrix")
    return [(np.asarray(s, dtype=float), h @ np.asarray(s, dtype=float)) for s in steps]
