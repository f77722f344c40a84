"""Exact trust-region subproblem solvers for compact quasi-Newton matrices.

Minimise ``Q(p) = 0.5 p^T B p + g^T p`` subject to ``||p|| <= delta`` where
``B = gamma*I + Psi M Psi^T``. The spectral decomposition of ``B`` is obtained
from a thin QR of ``Psi`` and an eigen-decomposition of the small matrix
``R M R^T``; all norms of ``p(sigma) = -(B + sigma I)^{-1} g`` are evaluated
in that basis without forming ``p``.

The returned solution satisfies the global optimality conditions

    (B + sigma I) p = -g,   sigma (delta - ||p||) = 0,
    sigma >= 0,             B + sigma I positive semidefinite.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import dense
from .compact import BFGS, CompactHessian
from .errors import (
    HardCaseEigenvectorNotFound,
    MaxIterations,
    PoleHit,
    Singular,
    SingularShift,
    ZeroPrediction,
)

log = logging.getLogger(__name__)

NEWTON_MAX_ITER = 100
# relative size below which a gradient component on the leftmost eigenspace
# is treated as zero (hard case)
HARD_CASE_TOL = 1e-10
# eigenvalues closer than this (relative to the spectral radius) share an eigenspace
CLUSTER_TOL = 1e-10
UMIN_PROBE_TOL = 1e-8


@dataclass(frozen=True)
class SpectralFactors:
    lambda1: np.ndarray      # ascending eigenvalues of B on range(Psi)
    gamma: float             # eigenvalue on the orthogonal complement
    n_perp: int              # its multiplicity
    q: np.ndarray            # orthonormal basis of range(Psi)
    u: np.ndarray            # eigenvectors of R M R^T; P_par = q @ u
    r: np.ndarray
    g_par: np.ndarray        # P_par^T g
    g_perp_norm: float       # ||P_perp^T g||
    g_norm: float

    @property
    def lambda_min(self):
        cands = list(self.lambda1[:1])
        if self.n_perp > 0:
            cands.append(self.gamma)
        return float(min(cands))

    def terms(self):
        """All (eigenvalue, squared gradient coefficient) pairs of ``B``."""
        lam = np.append(self.lambda1, self.gamma)
        a = np.append(self.g_par ** 2, self.g_perp_norm ** 2)
        if self.n_perp == 0:
            lam, a = lam[:-1], a[:-1]
        return lam, a

    def spectral_radius(self):
        lam, _ = self.terms()
        return float(np.abs(lam).max(initial=abs(self.gamma)))


@dataclass(frozen=True)
class SubproblemSolution:
    p: np.ndarray
    sigma: float
    q_value: float
    on_boundary: bool
    hard_case: bool
    case: str = ""


def spectral_factors(b: CompactHessian, g) -> SpectralFactors:
    g = np.asarray(g, dtype=float)
    spec = b.spectrum
    g_q = spec.q.T @ g
    g_par = spec.u.T @ g_q
    # explicit projection instead of sqrt(||g||^2 - ||g_par||^2): no cancellation
    perp = g - spec.q @ g_q
    g_perp_norm = float(np.linalg.norm(perp)) if spec.n_perp > 0 else 0.0
    return SpectralFactors(
        lambda1=spec.lambda1,
        gamma=spec.gamma,
        n_perp=spec.n_perp,
        q=spec.q,
        u=spec.u,
        r=spec.r,
        g_par=g_par,
        g_perp_norm=g_perp_norm,
        g_norm=float(np.linalg.norm(g)),
    )


def _norm_terms(sigma, lam, a):
    keep = a > 0
    d = lam[keep] + sigma
    if np.any(np.abs(d) < 1e-300):
        raise PoleHit(f"sigma = {sigma!r} sits on an eigenvalue")
    return d, a[keep]


def p_norm(sigma, f: SpectralFactors):
    """``||p(sigma)||`` from the spectral coefficients alone."""
    lam, a = f.terms()
    d, a = _norm_terms(sigma, lam, a)
    return math.sqrt(float(np.sum(a / (d * d))))


def _phi_and_derivative(sigma, lam, a, delta):
    d, a = _norm_terms(sigma, lam, a)
    norm2 = float(np.sum(a / (d * d)))
    if norm2 == 0.0:
        return math.inf, 0.0
    norm = math.sqrt(norm2)
    phi = 1.0 / norm - 1.0 / delta
    dphi = float(np.sum(a / (d * d * d))) / (norm2 * norm)
    return phi, dphi


def phi(sigma, f: SpectralFactors, delta):
    lam, a = f.terms()
    return _phi_and_derivative(sigma, lam, a, delta)[0]


def solve_sigma(f: SpectralFactors, delta, max_iter=NEWTON_MAX_ITER):
    """Root of ``1/||p(sigma)|| - 1/delta`` right of ``max(0, -lambda_min)``.

    Newton's method safeguarded by bisection. The caller guarantees the
    boundary root exists, i.e. ``||p|| > delta`` just right of the lower end.
    """
    lam, a = f.terms()
    lam_min = f.lambda_min
    lo = max(0.0, -lam_min)
    sigma = lo + 1e-10 * (1.0 + abs(lam_min))
    hi = sigma + f.g_norm / delta + abs(lam_min) + 1.0
    while _phi_and_derivative(hi, lam, a, delta)[0] < 0:
        hi = 2.0 * hi + 1.0
    tol = min(1e-10, 1e-12 / delta)

    for _ in range(max_iter):
        val, der = _phi_and_derivative(sigma, lam, a, delta)
        if abs(val) <= tol:
            return sigma
        if val < 0:
            lo = sigma
        else:
            hi = sigma
        step = sigma - val / der if der > 0 and math.isfinite(val) else math.nan
        sigma = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * max(hi, 1e-300):
            return sigma
    raise MaxIterations(f"secular equation not solved in {max_iter} iterations")


def p_of_sigma(b: CompactHessian, g, sigma):
    """``-(B + sigma I)^{-1} g`` by the Sherman-Morrison-Woodbury formula."""
    g = np.asarray(g, dtype=float)
    tau = b.gamma + sigma
    if tau == 0:
        raise SingularShift("gamma + sigma == 0")
    if b.rank == 0:
        return -g / tau
    small = tau * b.minv + b.psi.T @ b.psi
    inner = dense.solve_small(small, b.psi.T @ g)
    return -(g - b.psi @ inner) / tau


def _p_spectral(f: SpectralFactors, g, sigma, skip=None):
    """``-(B + sigma I)^+ g`` in the spectral basis.

    ``skip`` is a boolean mask over ``terms()`` selecting eigen-directions to
    drop (the leftmost eigenspace when ``B + sigma I`` is singular).
    """
    k = f.lambda1.size
    d_par = f.lambda1 + sigma
    coef = np.zeros(k)
    par_skip = np.zeros(k, dtype=bool) if skip is None else skip[:k]
    ok = ~par_skip
    coef[ok] = f.g_par[ok] / d_par[ok]
    g_q = f.q.T @ g
    p = -(f.q @ (f.u @ coef))
    perp_skip = skip is not None and f.n_perp > 0 and bool(skip[-1])
    if f.n_perp > 0 and not perp_skip:
        p -= (g - f.q @ g_q) / (f.gamma + sigma)
    return p


def _residual_ok(b, g, p, sigma, f):
    res = b.apply(p) + sigma * p + g
    scale = f.g_norm + (f.spectral_radius() + abs(sigma)) * np.linalg.norm(p)
    return np.linalg.norm(res) <= 1e-10 * max(scale, 1e-300)


def _p_nonsingular(b, g, sigma, f):
    try:
        p = p_of_sigma(b, g, sigma)
        if np.all(np.isfinite(p)) and _residual_ok(b, g, p, sigma, f):
            return p
    except Singular:
        pass
    return _p_spectral(f, g, sigma)


def model_value(b: CompactHessian, g, p):
    """``Q(p) = 0.5 p^T B p + g^T p``."""
    return float(0.5 * p @ b.apply(p) + np.asarray(g, dtype=float) @ p)


def _leftmost(f):
    lam, a = f.terms()
    lam_min = f.lambda_min
    tol = CLUSTER_TOL * max(1.0, f.spectral_radius())
    left = lam <= lam_min + tol
    return lam, a, left


def _u_min(f, left):
    k = f.lambda1.size
    if k and left[0]:
        return f.q @ f.u[:, 0]
    n = f.q.shape[0]
    for j in range(n):
        v = -f.q @ f.q[j, :]
        v[j] += 1.0
        nv = np.linalg.norm(v)
        if nv > UMIN_PROBE_TOL:
            v -= f.q @ (f.q.T @ v)
            return v / np.linalg.norm(v)
    raise HardCaseEigenvectorNotFound("every canonical vector lies in range(Psi)")


def _finish(b, g, p, sigma, delta, hard, case):
    nrm = float(np.linalg.norm(p))
    on_boundary = sigma > 0 or abs(nrm - delta) <= 1e-8 * delta
    return SubproblemSolution(p, float(sigma), model_value(b, g, p), on_boundary, hard, case)


def solve_subproblem_sr1(b: CompactHessian, g, delta) -> SubproblemSolution:
    """Global minimiser of the model for any (possibly indefinite) ``B``.

    Cases, with ``lambda_min`` the leftmost eigenvalue of ``B``:

    * ``lambda_min > 0`` and the Newton step fits: ``sigma = 0``.
    * ``lambda_min <= 0`` and ``||p||`` stays within ``delta`` as
      ``sigma -> -lambda_min``: ``sigma = -lambda_min`` with the
      pseudo-inverse step; when ``lambda_min < 0`` a multiple of a leftmost
      eigenvector is added to reach the boundary (the hard case).
    * otherwise a boundary solution with ``sigma`` from the secular equation.
    """
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    g = np.asarray(g, dtype=float)
    f = spectral_factors(b, g)
    lam, a, left = _leftmost(f)
    lam_min = f.lambda_min

    if lam_min > 0 and p_norm(0.0, f) <= delta:
        p = _p_nonsingular(b, g, 0.0, f)
        return _finish(b, g, p, 0.0, delta, False, "interior")

    if lam_min <= 0:
        g_left = np.sqrt(a[left])
        if np.all(g_left <= HARD_CASE_TOL * max(f.g_norm, 1e-300)):
            sigma = -lam_min
            rest = ~left & (a > 0)
            d = lam[rest] + sigma
            p_hat_norm = math.sqrt(float(np.sum(a[rest] / (d * d))))
            if p_hat_norm <= delta:
                p = _p_spectral(f, g, sigma, skip=left)
                if lam_min < 0:
                    alpha = math.sqrt(max(0.0, delta * delta - float(p @ p)))
                    p = p + alpha * _u_min(f, left)
                    return _finish(b, g, p, sigma, delta, True, "hard")
                return _finish(b, g, p, sigma, delta, False, "singular")

    sigma = solve_sigma(f, delta)
    p = _p_nonsingular(b, g, sigma, f)
    return _finish(b, g, p, sigma, delta, False, "boundary")


def solve_subproblem_bfgs(b: CompactHessian, g, delta) -> SubproblemSolution:
    """Subproblem for a positive definite (L-BFGS) matrix."""
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    g = np.asarray(g, dtype=float)
    f = spectral_factors(b, g)
    if f.lambda_min <= 0:
        log.warning("BFGS matrix not positive definite (lambda_min=%.3e); using the general solver", f.lambda_min)
        return solve_subproblem_sr1(b, g, delta)
    if p_norm(0.0, f) <= delta:
        return _finish(b, g, _p_nonsingular(b, g, 0.0, f), 0.0, delta, False, "interior")
    sigma = solve_sigma(f, delta)
    return _finish(b, g, _p_nonsingular(b, g, sigma, f), sigma, delta, False, "boundary")


def solve_subproblem(b: CompactHessian, g, delta) -> SubproblemSolution:
    if b.kind == BFGS:
        return solve_subproblem_bfgs(b, g, delta)
    return solve_subproblem_sr1(b, g, delta)


def rho(f_cur, f_trial, q_at_p):
    """Ratio of actual to predicted reduction, ``(f_trial - f_cur) / Q(p)``."""
    if abs(q_at_p) < 1e-300:
        raise ZeroPrediction("model predicts no decrease")
    return (f_trial - f_cur) / q_at_p


@dataclass(frozen=True)
class TrustRegionState:
    delta: float = 1.0
    tau1: float = 1e-4
    tau2: float = 0.1
    tau3: float = 0.75
    eta2: float = 0.5
    eta3: float = 0.8
    eta4: float = 2.0
    last_rho: Optional[float] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("radius must be positive")
        if not 0 < self.tau2 < 0.5 < self.tau3 < 1:
            raise ValueError("need 0 < tau2 < 0.5 < tau3 < 1")
        if not (0 < self.eta2 <= 0.5 < self.eta3 < 1 < self.eta4):
            raise ValueError("need 0 < eta2 <= 0.5 < eta3 < 1 < eta4")


def adjust_radius(st: TrustRegionState, rho_val, p_norm_val) -> TrustRegionState:
    if rho_val > st.tau3:
        delta = st.delta if p_norm_val <= st.eta3 * st.delta else st.eta4 * st.delta
    elif st.tau2 <= rho_val <= st.tau3:
        delta = st.delta
    else:
        delta = st.eta2 * st.delta
    return replace(st, delta=delta, last_rho=rho_val)
