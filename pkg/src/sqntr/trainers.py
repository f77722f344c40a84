"""Trust-region limited-memory quasi-Newton training loops and an Adam baseline.

Every loop returns a :class:`TrainResult` whose ``records`` hold one
:class:`MetricsRecord` per iteration. Runs are deterministic given the
configuration and seed: the only randomness is the epoch shuffle, drawn from
``numpy.random.default_rng(cfg.seed)``.
"""
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from .compact import BFGS, SR1, CompactHessian, build, select_gamma
from .curvature import BFGS_TAU, SR1_TAU, CurvaturePairBuffer, accept_bfgs_pair, accept_sr1_pair
from .errors import ConfigInvalid, NoConvergence, NonFiniteLoss, SingularMiddle
from .sampling import CURRENT, TRIAL, ChunkEval, aggregate_duplex, aggregate_triple, carry_cache, plain_batches, plan_epoch
from .trust_region import TrustRegionState, adjust_radius, model_value, solve_subproblem

METHODS = ("lbfgs-tr", "lsr1-tr", "slbfgs-tr", "slsr1-tr", "adam")
DETERMINISTIC = ("lbfgs-tr", "lsr1-tr")
STOCHASTIC = ("slbfgs-tr", "slsr1-tr")

CSV_COLUMNS = (
    "iteration", "epoch", "wall_time_s", "train_loss", "train_acc",
    "test_loss", "test_acc", "delta", "rho", "gamma", "accepted", "pairs_stored",
)


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of a training run.

    ``tau`` defaults to the curvature threshold of the method's update
    (``1e-2`` for BFGS, ``1e-8`` for SR1). ``overlap`` is the chunk size, so
    quasi-Newton batches hold ``2 * overlap`` samples; Adam uses plain batches
    of the same size. ``max_iter`` bounds the full-batch methods, which have
    no notion of epochs.
    """

    method: str = "slbfgs-tr"
    memory: int = 20
    overlap: int = 50
    epoch_max: int = 10
    grad_tol: float = 1e-5
    delta0: float = 1.0
    gamma0: float = 1.0
    tau: Optional[float] = None
    tau1: float = 1e-4
    seed: int = 0
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iter: int = 1000
    stop_on_grad: bool = True
    display_every: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigInvalid(f"method must be one of {', '.join(METHODS)}")
        for name in ("memory", "overlap", "epoch_max", "max_iter", "display_every"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigInvalid(f"{name} must be a positive integer")
        for name in ("delta0", "adam_lr", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigInvalid(f"{name} must be positive")
        if self.grad_tol < 0:
            raise ConfigInvalid("grad_tol must be nonnegative")
        if not 0 < self.tau1 < 1:
            raise ConfigInvalid("tau1 must lie in (0, 1)")
        if self.tau is not None and not 0 < self.tau < 1:
            raise ConfigInvalid("tau must lie in (0, 1)")
        if self.kind == BFGS and not self.gamma0 > 0:
            raise ConfigInvalid("gamma0 must be positive for BFGS")
        if self.gamma0 == 0:
            raise ConfigInvalid("gamma0 must be nonzero")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigInvalid("Adam decay factors must lie in [0, 1)")

    @property
    def kind(self):
        return SR1 if "sr1" in self.method else BFGS

    @property
    def curvature_tau(self):
        if self.tau is not None:
            return self.tau
        return SR1_TAU if self.kind == SR1 else BFGS_TAU

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigInvalid(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MetricsRecord:
    """One row of training metrics.

    ``delta`` is the radius the iteration's step was computed with, ``gamma``
    the scaling in effect after the iteration. Accuracies are percentages and
    NaN for objectives that are not classifiers.
    """

    iteration: int
    epoch: int
    wall_time_s: float
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    delta: float
    rho: float
    gamma: float
    accepted: bool
    pairs_stored: int

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]

    def key(self):
        """Every field except the wall time, for reproducibility checks."""
        return tuple(v for c, v in zip(CSV_COLUMNS, self.row()) if c != "wall_time_s")


@dataclass
class StoredPair:
    """Scalars of the curvature test evaluated when a pair was stored."""

    iteration: int
    s_dot_r: float       # s^T y (BFGS) or s^T (y - B s) (SR1)
    s_norm: float
    r_norm: float        # ||y - B s|| for SR1, unused for BFGS


@dataclass
class TrainResult:
    records: List[MetricsRecord]
    w: np.ndarray
    stop_reason: str
    stored_pairs: List[StoredPair] = field(default_factory=list)
    chunk_evals_per_epoch: List[int] = field(default_factory=list)
    iterates: Optional[List[np.ndarray]] = None


class _Clock:
    def __init__(self):
        self.start = time.perf_counter()

    def __call__(self):
        return time.perf_counter() - self.start


def _check_finite(loss, grad, what, records):
    if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteLoss(f"non-finite loss or gradient at the {what} point", records)


class _QuasiNewton:
    """Curvature pairs, scaling and the compact matrix shared by all TR loops."""

    def __init__(self, cfg, dim):
        self.kind = cfg.kind
        self.tau = cfg.curvature_tau
        # more than ``dim`` pairs make S^T S, and with it M^-1, singular
        self.buf = CurvaturePairBuffer(min(cfg.memory, dim), dim)
        self.b = CompactHessian.identity(self.kind, cfg.gamma0, dim)
        self.stored = []

    @property
    def gamma(self):
        return self.b.gamma

    def offer(self, k, s, y):
        """Curvature test and, on success, store the pair and rebuild ``B``."""
        if not np.any(s):
            return False
        if self.kind == BFGS:
            ok = accept_bfgs_pair(s, y, self.tau)
            stat = StoredPair(k, float(s @ y), float(np.linalg.norm(s)), math.nan)
        else:
            bs = self.b.apply(s)
            r = y - bs
            ok = accept_sr1_pair(s, y, bs, self.tau)
            stat = StoredPair(k, float(s @ r), float(np.linalg.norm(s)), float(np.linalg.norm(r)))
        if not ok:
            return False
        self.buf.push(s, y)
        self.stored.append(stat)
        self._rebuild()
        return True

    def _rebuild(self):
        # gamma sees every stored pair. A degenerate compact matrix (singular
        # M^-1, or an eigensolver failure) gets one retry without the oldest
        # pair; a second failure propagates.
        gamma = select_gamma(self.kind, self.buf).gamma
        try:
            self.b = self._checked_build(gamma)
        except (SingularMiddle, NoConvergence):
            self.buf.drop_oldest()
            self.b = self._checked_build(gamma)

    def _checked_build(self, gamma):
        if len(self.buf) == 0:
            return CompactHessian.identity(self.kind, gamma, self.buf.dim)
        b = build(self.kind, self.buf, gamma)
        b.spectrum
        return b

    def step(self, k, g, delta):
        """Trust-region step and its model value. The first step is steepest descent."""
        if k == 0:
            p = -delta * g / np.linalg.norm(g)
            return p, model_value(self.b, g, p)
        sol = solve_subproblem(self.b, g, delta)
        return sol.p, sol.q_value


def _ratio(f_cur, f_trial, q):
    if q == 0:
        return -math.inf
    return (f_trial - f_cur) / q


def _initial_point(obj, cfg, w0):
    if w0 is not None:
        return np.array(w0, dtype=float)
    if hasattr(obj, "init_params"):
        return obj.init_params(cfg.seed)
    return np.zeros(obj.param_dim)


def _eval_metrics(obj, test_obj, w):
    train_loss = obj.loss(w)
    train_acc = obj.accuracy(w)
    if test_obj is None:
        return train_loss, train_acc, math.nan, math.nan
    return train_loss, train_acc, test_obj.loss(w), test_obj.accuracy(w)


def train_deterministic(cfg, obj, w0=None, test_obj=None, keep_iterates=False):
    """Full-batch L-BFGS-TR or L-SR1-TR.

    Stops at the first iterate with ``||g|| <= cfg.grad_tol`` (when
    ``cfg.stop_on_grad``), or after ``cfg.max_iter`` iterations.
    """
    if cfg.method not in DETERMINISTIC:
        raise ConfigInvalid(f"{cfg.method} is not a full-batch method")
    clock = _Clock()
    w = _initial_point(obj, cfg, w0)
    qn = _QuasiNewton(cfg, w.size)
    tr = TrustRegionState(delta=cfg.delta0, tau1=cfg.tau1)
    records = []
    iterates = [w.copy()] if keep_iterates else None
    f, g = obj.eval_batch(w)
    _check_finite(f, g, "initial", records)
    stop = "max_iter"
    for k in range(cfg.max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm == 0 or (cfg.stop_on_grad and gnorm <= cfg.grad_tol):
            stop = "grad_tol"
            break
        delta = tr.delta
        p, q = qn.step(k, g, delta)
        w_t = w + p
        f_t, g_t = obj.eval_batch(w_t)
        _check_finite(f_t, g_t, "trial", records)
        rho = _ratio(f, f_t, q)
        accepted = rho >= tr.tau1
        tr = adjust_radius(tr, rho, float(np.linalg.norm(p)))
        qn.offer(k, p, g_t - g)
        if accepted:
            w, f, g = w_t, f_t, g_t
        if keep_iterates:
            iterates.append(w.copy())
        acc = obj.accuracy(w) if k % cfg.display_every == 0 else math.nan
        if test_obj is not None and k % cfg.display_every == 0:
            test_loss, test_acc = test_obj.loss(w), test_obj.accuracy(w)
        else:
            test_loss = test_acc = math.nan
        records.append(MetricsRecord(
            k, k + 1, clock(), f, acc, test_loss, test_acc,
            delta, rho, qn.gamma, bool(accepted), len(qn.buf),
        ))
    else:
        gnorm = np.linalg.norm(g)
        if cfg.stop_on_grad and gnorm <= cfg.grad_tol:
            stop = "grad_tol"
    return TrainResult(records, w, stop, qn.stored, iterates=iterates)


class _ChunkEvaluator:
    """Evaluates chunks of an epoch plan and counts fresh evaluations."""

    def __init__(self, obj):
        self.obj = obj
        self.count = 0

    def __call__(self, cid, idx, w, at, k):
        loss, grad = self.obj.eval_batch(w, idx)
        self.count += 1
        return ChunkEval(cid, loss, grad, at, k)


def _aggregate(plan, j, evals):
    if plan.is_triple(j):
        return aggregate_triple(evals[j], evals["R"], evals[j + 1], plan.chunk_size, plan.remainder.size)
    return aggregate_duplex(evals[j], evals[j + 1])


def train_stochastic(cfg, obj, w0=None, test_obj=None, keep_iterates=False):
    """sL-BFGS-TR or sL-SR1-TR over half-overlapping batches.

    Each epoch draws a fresh plan and visits all of its batches once. Batch
    ``j`` needs chunks ``j`` and ``j + 1`` at the current point and at the
    trial point; chunk ``j`` at the current point is carried over from batch
    ``j - 1``, so apart from the first batch of an epoch each iteration makes
    three fresh chunk evaluations (two more for the remainder of a triple).
    """
    if cfg.method not in STOCHASTIC:
        raise ConfigInvalid(f"{cfg.method} is not a multi-batch method")
    clock = _Clock()
    rng = np.random.default_rng(cfg.seed)
    w = _initial_point(obj, cfg, w0)
    qn = _QuasiNewton(cfg, w.size)
    tr = TrustRegionState(delta=cfg.delta0, tau1=cfg.tau1)
    ev = _ChunkEvaluator(obj)
    records = []
    iterates = [w.copy()] if keep_iterates else None
    evals_per_epoch = []
    k = 0
    stop = "epoch_max"
    for epoch in range(1, cfg.epoch_max + 1):
        plan = plan_epoch(obj.n_samples, cfg.overlap, rng)
        start = ev.count
        carried = None
        for j in range(plan.n_batches):
            cur = {j: carried if carried is not None else ev(j, plan.chunks[j], w, CURRENT, k)}
            cur[j + 1] = ev(j + 1, plan.chunks[j + 1], w, CURRENT, k)
            if plan.is_triple(j):
                cur["R"] = ev("R", plan.remainder, w, CURRENT, k)
            f, g = _aggregate(plan, j, cur)
            _check_finite(f, g, "current", records)
            gnorm = np.linalg.norm(g)
            if gnorm == 0 or (cfg.stop_on_grad and gnorm <= cfg.grad_tol):
                stop = "grad_tol"
                break

            delta = tr.delta
            p, q = qn.step(k, g, delta)
            w_t = w + p
            trial = {c: ev(c, plan.chunks[c], w_t, TRIAL, k) for c in (j, j + 1)}
            if plan.is_triple(j):
                trial["R"] = ev("R", plan.remainder, w_t, TRIAL, k)
            f_t, g_t = _aggregate(plan, j, trial)
            _check_finite(f_t, g_t, "trial", records)

            rho = _ratio(f, f_t, q)
            accepted = rho >= tr.tau1
            tr = adjust_radius(tr, rho, float(np.linalg.norm(p)))
            qn.offer(k, p, g_t - g)
            if accepted:
                w = w_t
            if j + 1 < plan.n_batches:
                carried = carry_cache(plan, j, accepted, trial, cur)
            if keep_iterates:
                iterates.append(w.copy())
            if k % cfg.display_every == 0:
                metrics = _eval_metrics(obj, test_obj, w)
            else:
                metrics = (math.nan,) * 4
            records.append(MetricsRecord(
                k, epoch, clock(), *metrics, delta, rho, qn.gamma, bool(accepted), len(qn.buf),
            ))
            k += 1
        evals_per_epoch.append(ev.count - start)
        if stop == "grad_tol":
            break
    return TrainResult(records, w, stop, qn.stored, evals_per_epoch, iterates)


def train_adam(cfg, obj, w0=None, test_obj=None, keep_iterates=False):
    """Adam with bias-corrected moments over shuffled non-overlapping batches.

    The batch size is ``2 * cfg.overlap`` so one epoch touches the same number
    of samples per batch as the multi-batch methods.
    """
    if cfg.method != "adam":
        raise ConfigInvalid(f"{cfg.method} is not adam")
    clock = _Clock()
    rng = np.random.default_rng(cfg.seed)
    w = _initial_point(obj, cfg, w0)
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    batch_size = min(2 * cfg.overlap, obj.n_samples)
    records = []
    iterates = [w.copy()] if keep_iterates else None
    k = 0
    for epoch in range(1, cfg.epoch_max + 1):
        for idx in plain_batches(obj.n_samples, batch_size, rng):
            f, g = obj.eval_batch(w, idx)
            _check_finite(f, g, "current", records)
            t = k + 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            w = w - cfg.adam_lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            if keep_iterates:
                iterates.append(w.copy())
            if k % cfg.display_every == 0:
                metrics = _eval_metrics(obj, test_obj, w)
            else:
                metrics = (math.nan,) * 4
            records.append(MetricsRecord(
                k, epoch, clock(), *metrics, math.nan, math.nan, math.nan, True, 0,
            ))
            k += 1
    return TrainResult(records, w, "epoch_max", iterates=iterates)


def train(cfg, obj, w0=None, test_obj=None, keep_iterates=False):
    """Dispatch on ``cfg.method``."""
    if cfg.method in DETERMINISTIC:
        fn = train_deterministic
    elif cfg.method in STOCHASTIC:
        fn = train_stochastic
    else:
        fn = train_adam
    return fn(cfg, obj, w0=w0, test_obj=test_obj, keep_iterates=keep_iterates)
