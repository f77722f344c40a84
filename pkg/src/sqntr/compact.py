"""Compact limited-memory BFGS and SR1 matrices ``B = gamma*I + Psi M Psi^T``.

``M`` is never formed: the object keeps ``M^{-1}`` (what the update formulas
produce directly) and factors it on first use.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from . import dense
from .curvature import CurvaturePairBuffer, split_gram
from .errors import (
    DegenerateQuotient,
    DimensionMismatch,
    EmptyBuffer,
    NoConvergence,
    NotPositiveDefinite,
    Singular,
    SingularMiddle,
)

BFGS = "bfgs"
SR1 = "sr1"

BFGS_GAMMA_C = 0.9
SR1_GAMMA_C1 = 0.5
SR1_GAMMA_C2 = 1.5
SR1_GAMMA_FLOOR = 1e-6


@dataclass(frozen=True)
class GammaResult:
    gamma: float
    lambda_hat: Optional[float]
    used_heuristic: bool


@dataclass(frozen=True)
class Spectrum:
    """Eigen-structure of a compact matrix, independent of any gradient.

    ``B = P_par diag(lambda1) P_par^T + gamma (I - P_par P_par^T)`` with
    ``P_par = q @ u``.
    """

    q: np.ndarray          # (n, k) orthonormal basis of range(Psi)
    r: np.ndarray          # (k, k) thin-QR factor of Psi
    u: np.ndarray          # (k, k) eigenvectors of R M R^T
    lambda_hat: np.ndarray  # ascending eigenvalues of R M R^T
    gamma: float

    @property
    def lambda1(self):
        return self.lambda_hat + self.gamma

    @property
    def n_perp(self):
        """Multiplicity of ``gamma`` as an eigenvalue (``n - k``)."""
        return self.q.shape[0] - self.q.shape[1]

    @property
    def lambda_min(self):
        cands = list(self.lambda1[:1])
        if self.n_perp > 0:
            cands.append(self.gamma)
        return float(min(cands))

    @property
    def p_par(self):
        return self.q @ self.u


class CompactHessian:
    """``gamma * I + psi @ inv(minv) @ psi.T``; treat instances as immutable."""

    def __init__(self, kind, gamma, psi, minv):
        psi = np.asarray(psi, dtype=float)
        minv = np.asarray(minv, dtype=float)
        if psi.ndim != 2 or minv.shape != (psi.shape[1], psi.shape[1]):
            raise DimensionMismatch("minv must be square with one row per column of psi")
        if kind not in (BFGS, SR1):
            raise ValueError(f"unknown kind {kind!r}")
        self.kind = kind
        self.gamma = float(gamma)
        self.psi = psi
        self.minv = 0.5 * (minv + minv.T)

    @classmethod
    def identity(cls, kind, gamma, dim):
        return cls(kind, gamma, np.zeros((dim, 0)), np.zeros((0, 0)))

    @property
    def dim(self):
        return self.psi.shape[0]

    @property
    def rank(self):
        return self.psi.shape[1]

    @cached_property
    def minv_lu(self):
        try:
            return dense.lu_factor(self.minv)
        except Singular as exc:
            raise SingularMiddle(str(exc)) from exc

    def middle_solve(self, v):
        """``M @ v``, i.e. ``minv^{-1} v``."""
        return dense.lu_solve(self.minv_lu, v)

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.dim:
            raise DimensionMismatch(f"vector of length {v.shape[0]} for a {self.dim}-dim operator")
        out = self.gamma * v
        if self.rank:
            out = out + self.psi @ self.middle_solve(self.psi.T @ v)
        return out

    __matmul__ = apply

    def to_dense(self):
        out = self.gamma * np.eye(self.dim)
        if self.rank:
            out += self.psi @ self.middle_solve(self.psi.T)
        return 0.5 * (out + out.T)

    @cached_property
    def spectrum(self):
        """Thin QR of ``psi`` plus eigen-decomposition of ``R M R^T``.

        ``psi`` need not have full column rank: only the orthonormal ``Q`` and
        the product ``R M R^T`` enter, never ``R^{-1}``, so dependent columns
        just contribute eigenvalues equal to ``gamma``. (On a quadratic the
        BFGS ``[gamma S, Y]`` spans a Krylov space and loses rank routinely.)
        When ``psi`` has more columns than rows, ``Q = I`` and ``R = psi``.
        Raises :class:`SingularMiddle` if ``minv`` is singular.
        """
        if self.rank > self.dim:
            q, r = np.eye(self.dim), self.psi.copy()
        else:
            q, r = dense.thin_qr(self.psi, check_rank=False)
        if self.rank == 0:
            return Spectrum(q, r, np.zeros((0, 0)), np.zeros(0), self.gamma)
        rmr = r @ self.middle_solve(r.T)
        u, lam = dense.sym_eig(0.5 * (rmr + rmr.T))
        return Spectrum(q, r, u, lam, self.gamma)


def apply(b, v):
    return b.apply(v)


def gamma_h(s, y):
    """Scaling heuristic ``y^T y / y^T s``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    ys = float(y @ s)
    if abs(ys) < 1e-14 * np.linalg.norm(y) * np.linalg.norm(s) or ys == 0.0:
        raise DegenerateQuotient(f"y^T s = {ys:.3e}")
    return float(y @ y) / ys


def smallest_gen_eig(buf):
    """Smallest eigenvalue of ``(L + D + L^T) u = lam S^T S u``."""
    lower, diag, _ = split_gram(buf)
    return dense.gen_sym_eig_smallest(lower + diag + lower.T, buf.gram_ss)


def select_gamma_bfgs(buf, c=BFGS_GAMMA_C):
    if len(buf) == 0:
        raise EmptyBuffer("gamma selection needs at least one pair")
    try:
        lam = smallest_gen_eig(buf)
    except (NotPositiveDefinite, NoConvergence):
        lam = None
    if lam is not None and lam > 0:
        return GammaResult(max(1.0, c * lam), lam, False)
    try:
        gh = gamma_h(buf.S[:, -1], buf.Y[:, -1])
    except DegenerateQuotient:
        gh = 1.0
    return GammaResult(max(1.0, gh), lam, True)


def select_gamma_sr1(buf, c1=SR1_GAMMA_C1, c2=SR1_GAMMA_C2, floor=SR1_GAMMA_FLOOR):
    if len(buf) == 0:
        raise EmptyBuffer("gamma selection needs at least one pair")
    try:
        lam = smallest_gen_eig(buf)
    except (NotPositiveDefinite, NoConvergence):
        return GammaResult(-floor, None, False)
    return GammaResult(gamma_from_lambda_sr1(lam, c1, c2, floor), lam, False)


def gamma_from_lambda_sr1(lam, c1=SR1_GAMMA_C1, c2=SR1_GAMMA_C2, floor=SR1_GAMMA_FLOOR):
    if lam > 0:
        return max(floor, c1 * lam)
    return min(-floor, c2 * lam)


def build_bfgs(buf, gamma):
    """``Psi = [gamma*S, Y]``, ``M^{-1} = [[-gamma S^T S, -L], [-L^T, D]]``."""
    if not gamma > 0:
        raise ValueError(f"BFGS needs gamma > 0, got {gamma}")
    n = buf.dim or 0
    if len(buf) == 0:
        return CompactHessian.identity(BFGS, gamma, n)
    lower, diag, _ = split_gram(buf)
    psi = np.hstack([gamma * buf.S, buf.Y])
    minv = np.block([[-gamma * buf.gram_ss, -lower], [-lower.T, diag]])
    return CompactHessian(BFGS, gamma, psi, minv)


def build_sr1(buf, gamma):
    """``Psi = Y - gamma*S``, ``M^{-1} = D + L + L^T - gamma S^T S``."""
    if gamma == 0:
        raise ValueError("SR1 needs gamma != 0")
    n = buf.dim or 0
    if len(buf) == 0:
        return CompactHessian.identity(SR1, gamma, n)
    lower, diag, _ = split_gram(buf)
    psi = buf.Y - gamma * buf.S
    minv = diag + lower + lower.T - gamma * buf.gram_ss
    return CompactHessian(SR1, gamma, psi, minv)


def build(kind, buf, gamma):
    return build_bfgs(buf, gamma) if kind == BFGS else build_sr1(buf, gamma)


def select_gamma(kind, buf):
    return select_gamma_bfgs(buf) if kind == BFGS else select_gamma_sr1(buf)


__all__ = [
    "BFGS",
    "SR1",
    "CompactHessian",
    "CurvaturePairBuffer",
    "GammaResult",
    "Spectrum",
    "apply",
    "build",
    "build_bfgs",
    "build_sr1",
    "gamma_h",
    "select_gamma",
    "select_gamma_bfgs",
    "select_gamma_sr1",
    "smallest_gen_eig",
]
