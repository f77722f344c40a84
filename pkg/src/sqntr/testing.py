"""Dense reference implementations and random instance generators.

These are deliberately naive: full ``n x n`` matrices, ``numpy.linalg.eigh``
and plain bisection. They share no code path with the compact solvers and
serve as oracles for the test-suite and the ``fuzz`` command.
"""
import math
from dataclasses import dataclass

import numpy as np

from .compact import BFGS, SR1, build_bfgs, build_sr1, select_gamma_bfgs, select_gamma_sr1
from .curvature import CurvaturePairBuffer, accept_bfgs_pair
from .trust_region import solve_subproblem


def dense_bfgs_recursion(gamma, pairs, n):
    """Apply the rank-two BFGS update to ``gamma * I`` pair by pair."""
    b = gamma * np.eye(n)
    for s, y in pairs:
        bs = b @ s
        b = b - np.outer(bs, bs) / (s @ bs) + np.outer(y, y) / (y @ s)
    return b


def dense_sr1_recursion(gamma, pairs, n):
    """Apply the symmetric rank-one update to ``gamma * I`` pair by pair."""
    b = gamma * np.eye(n)
    for s, y in pairs:
        r = y - b @ s
        b = b + np.outer(r, r) / (r @ s)
    return b


@dataclass
class OracleSolution:
    p: np.ndarray
    sigma: float
    q_value: float
    hard_case: bool


def more_sorensen(bmat, g, delta, hard_tol=1e-10):
    """Dense global solution of ``min 0.5 p'Bp + g'p, ||p|| <= delta``.

    Full eigen-decomposition of ``bmat`` followed by bisection on the secular
    equation ``||(Lambda + sigma)^{-1} V^T g|| = delta``.
    """
    bmat = 0.5 * (bmat + bmat.T)
    g = np.asarray(g, dtype=float)
    lam, v = np.linalg.eigh(bmat)
    gt = v.T @ g
    lam1 = lam[0]
    gnorm = np.linalg.norm(g)

    def q(p):
        return float(0.5 * p @ bmat @ p + g @ p)

    def norm_at(sigma, mask=None):
        mask = np.ones_like(lam, dtype=bool) if mask is None else mask
        return math.sqrt(float(np.sum((gt[mask] / (lam[mask] + sigma)) ** 2)))

    if lam1 > 0:
        p = -v @ (gt / lam)
        if np.linalg.norm(p) <= delta:
            return OracleSolution(p, 0.0, q(p), False)

    scale = max(1.0, np.abs(lam).max())
    left = lam <= lam1 + 1e-10 * scale
    if lam1 <= 0 and np.all(np.abs(gt[left]) <= hard_tol * max(gnorm, 1e-300)):
        sigma = -lam1
        rest = ~left
        coef = np.zeros_like(gt)
        coef[rest] = gt[rest] / (lam[rest] + sigma)
        p_hat = -v @ coef
        if np.linalg.norm(p_hat) <= delta:
            alpha = math.sqrt(max(0.0, delta ** 2 - p_hat @ p_hat))
            p = p_hat + alpha * v[:, 0]
            return OracleSolution(p, sigma, q(p), lam1 < 0)

    lo = max(0.0, -lam1)
    hi = lo + gnorm / delta + abs(lam1) + 1.0
    while norm_at(hi) > delta:
        hi = 2 * hi + 1
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if norm_at(mid) > delta:
            lo = mid
        else:
            hi = mid
    sigma = hi
    p = -v @ (gt / (lam + sigma))
    return OracleSolution(p, sigma, q(p), False)


@dataclass
class Certificate:
    stationarity: float
    stationarity_bound: float
    sigma: float
    complementarity: float
    complementarity_bound: float
    psd_margin: float
    norm_excess: float

    @property
    def ok(self):
        return (
            self.stationarity <= self.stationarity_bound
            and self.sigma >= 0
            and self.complementarity <= self.complementarity_bound
            and self.psd_margin >= -1e-9
            and self.norm_excess <= 1e-8
        )


def certify(bmat, g, delta, p, sigma):
    """Global optimality conditions, measured on the dense matrix."""
    res = np.linalg.norm(bmat @ p + sigma * p + g)
    pn = np.linalg.norm(p)
    b1 = np.abs(bmat).sum(axis=0).max()
    return Certificate(
        stationarity=float(res),
        stationarity_bound=1e-7 * (np.linalg.norm(g) + b1 * pn),
        sigma=float(sigma),
        complementarity=float(sigma * abs(delta - pn)),
        complementarity_bound=1e-6 * delta * max(1.0, sigma),
        psd_margin=float(np.linalg.eigvalsh(0.5 * (bmat + bmat.T))[0] + sigma),
        norm_excess=float(pn / delta - 1.0),
    )


def _log_uniform(rng, lo, hi):
    return float(10 ** rng.uniform(np.log10(lo), np.log10(hi)))


def random_bfgs_buffer(rng, n, m, tau=1e-2):
    """``m`` pairs passing the BFGS curvature test, from a random SPD-ish model."""
    buf = CurvaturePairBuffer(max(m, 1), n)
    g = rng.standard_normal((n, n)) / math.sqrt(n)
    a = g @ g.T + _log_uniform(rng, 1e-2, 1.0) * np.eye(n)
    while len(buf) < m:
        s = rng.standard_normal(n)
        y = a @ s + 0.1 * rng.standard_normal(n)
        if accept_bfgs_pair(s, y, tau):
            buf.push(s, y)
    return buf


def random_sr1_buffer(rng, n, m, h=None):
    """``m`` pairs ``y = H s + noise`` for a random symmetric indefinite ``H``."""
    if h is None:
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        h = (q * rng.uniform(-5, 5, n)) @ q.T
    buf = CurvaturePairBuffer(max(m, 1), n)
    for _ in range(m):
        s = rng.standard_normal(n)
        buf.push(s, h @ s + 0.05 * rng.standard_normal(n))
    return buf


def random_compact(rng, kind, n_max=50, l_max=5):
    """A random well-posed compact matrix of the given kind."""
    while True:
        m = int(rng.integers(0, l_max + 1))
        cols = 2 * m if kind == BFGS else m
        n = int(rng.integers(max(cols + 1, 2), n_max + 1))
        if kind == BFGS:
            buf = random_bfgs_buffer(rng, n, m)
            if m and rng.random() < 0.5:
                gamma = select_gamma_bfgs(buf).gamma
            else:
                gamma = _log_uniform(rng, 1e-2, 1e2)
            b = build_bfgs(buf, gamma)
        else:
            buf = random_sr1_buffer(rng, n, m)
            if m and rng.random() < 0.5:
                gamma = select_gamma_sr1(buf).gamma
            else:
                gamma = _log_uniform(rng, 1e-2, 1e1) * (1 if rng.random() < 0.5 else -1)
            b = build_sr1(buf, gamma)
        if b.rank and np.linalg.cond(b.minv) > 1e8:
            continue
        return b


def random_instance(rng, kind, n_max=50, l_max=5):
    b = random_compact(rng, kind, n_max, l_max)
    g = rng.standard_normal(b.dim) * _log_uniform(rng, 1e-2, 1e2)
    delta = _log_uniform(rng, 1e-3, 1e2)
    return b, g, delta


def hard_case_instance(rng, n_max=50, l_max=5):
    """SR1 instance with ``lambda_min < 0`` and ``g`` orthogonal to its eigenspace.

    ``delta`` is chosen strictly larger than the norm of the pseudo-inverse
    step so the solution has to add a leftmost eigenvector.
    """
    while True:
        b = random_compact(rng, SR1, n_max, l_max)
        bd = b.to_dense()
        lam, v = np.linalg.eigh(bd)
        if lam[0] >= -1e-3:
            continue
        left = lam <= lam[0] + 1e-8 * max(1.0, np.abs(lam).max())
        if (~left).sum() == 0:
            continue
        gap = lam[~left][0] - lam[0]
        if gap < 1e-3 * max(1.0, np.abs(lam).max()):
            continue
        g = rng.standard_normal(b.dim) * _log_uniform(rng, 1e-2, 1e2)
        g -= v[:, left] @ (v[:, left].T @ g)
        rest = ~left
        p_hat = np.linalg.norm((v[:, rest].T @ g) / (lam[rest] - lam[0]))
        delta = max(p_hat, 1e-3) * rng.uniform(1.1, 10.0)
        return b, g, delta


@dataclass
class FuzzReport:
    kind: str
    count: int
    passed: int
    hard_cases: int
    max_q_gap: float
    failures: list

    @property
    def ok(self):
        return self.passed == self.count

    def summary(self):
        return (
            f"{self.kind}: {self.passed}/{self.count} pass "
            f"(hard cases {self.hard_cases}, max Q gap {self.max_q_gap:.2e})"
        )


def check_instance(b, g, delta, require_hard=False):
    """Solve one instance; return (ok, q_gap, hard_case, message)."""
    sol = solve_subproblem(b, g, delta)
    bd = b.to_dense()
    ref = more_sorensen(bd, g, delta)
    cert = certify(bd, g, delta, sol.p, sol.sigma)
    q_gap = abs(sol.q_value - ref.q_value) / (1.0 + abs(ref.q_value))
    ok = cert.ok and q_gap <= 1e-7
    if require_hard:
        ok = ok and sol.hard_case and abs(np.linalg.norm(sol.p) - delta) <= 1e-8 * delta
    msg = "" if ok else f"cert={cert} q_gap={q_gap:.3e} hard={sol.hard_case}"
    return ok, q_gap, sol.hard_case, msg


def fuzz_subproblem(count, seed, kind, hard_case=False):
    """Run ``count`` random instances and compare against the dense oracle."""
    rng = np.random.default_rng(seed)
    kind = kind.lower()
    if kind not in (BFGS, SR1):
        raise ValueError("kind must be 'bfgs' or 'sr1'")
    if hard_case and kind != SR1:
        raise ValueError("hard-case instances exist only for SR1")
    passed = hard = 0
    worst = 0.0
    failures = []
    for i in range(count):
        if hard_case:
            b, g, delta = hard_case_instance(rng)
        else:
            b, g, delta = random_instance(rng, kind)
        try:
            ok, gap, is_hard, msg = check_instance(b, g, delta, require_hard=hard_case)
        except ArithmeticError as exc:
            ok, gap, is_hard, msg = False, math.inf, False, repr(exc)
        worst = max(worst, gap)
        hard += is_hard
        if ok:
            passed += 1
        else:
            failures.append((i, msg))
    return FuzzReport(kind, count, passed, hard, worst, failures)
