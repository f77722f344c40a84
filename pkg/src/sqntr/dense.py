"""Small dense linear algebra kernels.

Everything here works on float64 numpy arrays whose small side is at most a
few dozen (twice the memory size of a limited-memory quasi-Newton matrix).
The kernels are written out rather than delegated to LAPACK so that their
tolerances and failure modes are explicit; the test-suite checks them against
``numpy.linalg``.

Functions are pure and never modify their inputs.
"""
import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, RankDeficient, Singular

__all__ = [
    "thin_qr",
    "cholesky",
    "sym_eig",
    "gen_sym_eig_smallest",
    "lu_factor",
    "lu_solve",
    "solve_small",
    "solve_upper",
    "solve_lower",
]

QR_RANK_TOL = 1e-12
QR_BLOCK = 8
CHOL_PIVOT_TOL = 1e-14
LU_PIVOT_TOL = 1e-14
JACOBI_MAX_SWEEPS = 30
_EPS = np.finfo(float).eps


def _as_matrix(a):
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def thin_qr(a, check_rank=True):
    """Householder thin QR factorization ``a = q @ r``.

    Parameters
    ----------
    a : array_like, shape (n, k) with k <= n
    check_rank : bool
        With ``False`` a dependent column only yields a (near) zero diagonal
        entry of ``r``; ``q`` stays orthonormal and ``q @ r`` still equals ``a``.

    Returns
    -------
    q : ndarray, shape (n, k)
        Orthonormal columns.
    r : ndarray, shape (k, k)
        Upper triangular with a nonnegative diagonal.

    Raises
    ------
    RankDeficient
        If the smallest diagonal magnitude of ``r`` is at most
        ``1e-12`` times the largest.
    """
    a = _as_matrix(a)
    n, k = a.shape
    if k > n:
        raise RankDeficient(f"{k} columns cannot be independent in dimension {n}")
    if k == 0:
        return np.zeros((n, 0)), np.zeros((0, 0))
    # columns of ``a`` are stored as contiguous rows of ``wt``; blocked
    # Householder accumulates the reflectors of a panel as I - V T V^T so the
    # tall trailing block is touched once per panel
    wt = np.ascontiguousarray(a.T)
    panels = []
    for j0 in range(0, k, QR_BLOCK):
        j1 = min(j0 + QR_BLOCK, k)
        width = j1 - j0
        v_blk = np.zeros((width, n - j0))
        taus = np.zeros(width)
        for jj in range(width):
            col = j0 + jj
            x = wt[col, col:]
            normx = np.linalg.norm(x)
            if normx == 0.0:
                continue
            v = x.copy()
            v[0] -= -normx if x[0] >= 0 else normx
            vnorm = np.linalg.norm(v)
            if vnorm == 0.0:
                continue
            v /= vnorm
            blk = wt[col:j1, col:]
            blk -= 2.0 * np.outer(blk @ v, v)
            v_blk[jj, col - j0:] = v
            taus[jj] = 2.0
        t_blk = np.zeros((width, width))
        for jj in range(width):
            if jj:
                t_blk[:jj, jj] = -taus[jj] * (t_blk[:jj, :jj] @ (v_blk[:jj] @ v_blk[jj]))
            t_blk[jj, jj] = taus[jj]
        if j1 < k:
            trail = wt[j1:, j0:]
            trail -= ((trail @ v_blk.T) @ t_blk) @ v_blk
        panels.append((j0, v_blk, t_blk))
    r = np.triu(wt[:, :k].T)

    # q^T, built by applying the block reflectors to the leading identity
    qt = np.zeros((k, n))
    qt[np.arange(k), np.arange(k)] = 1.0
    for j0, v_blk, t_blk in reversed(panels):
        sub = qt[j0:, j0:]
        sub -= ((sub @ v_blk.T) @ t_blk.T) @ v_blk
    q = qt.T

    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    r *= signs[:, None]
    q *= signs[None, :]

    diag = np.abs(np.diag(r))
    if check_rank and (diag.max() == 0.0 or diag.min() <= QR_RANK_TOL * diag.max()):
        raise RankDeficient(
            f"thin QR: min |R_jj| = {diag.min():.3e}, max |R_jj| = {diag.max():.3e}"
        )
    return q, r


def cholesky(a):
    """Upper-triangular ``r`` with ``r.T @ r == a``.

    Raises :class:`NotPositiveDefinite` when a pivot falls to
    ``1e-14 * trace(a) / dim`` or below.
    """
    a = _as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("cholesky needs a square matrix")
    if n == 0:
        return np.zeros((0, 0))
    a = 0.5 * (a + a.T)
    floor = CHOL_PIVOT_TOL * max(np.trace(a), 0.0) / n
    r = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - r[:j, j] @ r[:j, j]
        if not pivot > floor or pivot <= 0.0:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e}")
        r[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            r[j, j + 1:] = (a[j, j + 1:] - r[:j, j] @ r[:j, j + 1:]) / r[j, j]
    return r


def _round_robin(n):
    """Rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eig(a, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.

    Each sweep visits every off-diagonal pair once; pairs are grouped in a
    round-robin order so that the rotations inside a round act on disjoint
    rows/columns and can be applied together.

    Returns
    -------
    u : ndarray, shape (n, n)
        Orthogonal matrix of eigenvectors (columns).
    lam : ndarray, shape (n,)
        Eigenvalues in ascending order.
    """
    a = _as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("sym_eig needs a square matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n <= 1:
        return v, np.diag(a).copy()

    scale = np.linalg.norm(a)
    off_mask = ~np.eye(n, dtype=bool)
    rounds = _round_robin(n)
    for _ in range(max_sweeps + 1):
        off = np.sqrt(np.sum(a[off_mask] ** 2))
        if off <= 1e-15 * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            nz = apq != 0.0
            if not nz.any():
                continue
            app = a[p, p]
            aqq = a[q, q]
            theta = np.zeros_like(apq)
            # theta may overflow to inf for a tiny apq; t then becomes 0,
            # which is the right limit
            with np.errstate(over="ignore"):
                theta[nz] = (aqq[nz] - app[nz]) / (2.0 * apq[nz])
                t = np.sign(theta + (theta == 0)) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[~nz] = 0.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # all rotations of a round touch disjoint indices: apply them as
            # one orthogonal matrix
            rot = np.eye(n)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            a[p, q] = 0.0
            a[q, p] = 0.0
            v = v @ rot
    else:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    return v[:, order], lam[order]


def solve_upper(r, b):
    """Back substitution for upper-triangular ``r``; ``b`` may be 1-d or 2-d."""
    b = np.array(b, dtype=float, copy=True)
    n = r.shape[0]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            b[i] -= r[i, i + 1:] @ b[i + 1:]
        b[i] /= r[i, i]
    return b


def solve_lower(low, b):
    """Forward substitution for lower-triangular ``low``."""
    b = np.array(b, dtype=float, copy=True)
    n = low.shape[0]
    for i in range(n):
        if i:
            b[i] -= low[i, :i] @ b[:i]
        b[i] /= low[i, i]
    return b


def gen_sym_eig_smallest(a, b):
    """Smallest ``lam`` with ``a @ u = lam * b @ u`` for SPD ``b``.

    Reduces to a standard problem through ``b = r.T @ r`` and
    ``c = r^-T a r^-1``. :class:`NotPositiveDefinite` propagates from the
    Cholesky factorization.
    """
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise ValueError("gen_sym_eig_smallest needs two square matrices of equal size")
    r = cholesky(b)
    a = 0.5 * (a + a.T)
    # c = r^-T a r^-1
    tmp = solve_lower(r.T, a)
    c = solve_lower(r.T, tmp.T).T
    _, lam = sym_eig(0.5 * (c + c.T))
    return float(lam[0])


def lu_factor(a):
    """LU factorization with partial pivoting.

    Returns ``(lu, perm)`` where ``a[perm] == L @ U`` with unit-lower ``L``
    stored below the diagonal of ``lu``. Raises :class:`Singular` when a pivot
    falls to ``1e-14 * ||a||_inf`` or below.
    """
    lu = _as_matrix(a)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError("lu_factor needs a square matrix")
    perm = np.arange(n)
    if n == 0:
        return lu, perm
    floor = LU_PIVOT_TOL * np.abs(lu).sum(axis=1).max()
    for j in range(n):
        piv = j + int(np.argmax(np.abs(lu[j:, j])))
        if not abs(lu[piv, j]) > floor:
            raise Singular(f"pivot {j} is {lu[piv, j]:.3e}")
        if piv != j:
            lu[[j, piv]] = lu[[piv, j]]
            perm[[j, piv]] = perm[[piv, j]]
        lu[j + 1:, j] /= lu[j, j]
        lu[j + 1:, j + 1:] -= np.outer(lu[j + 1:, j], lu[j, j + 1:])
    return lu, perm


def lu_solve(factors, b):
    lu, perm = factors
    b = np.asarray(b, dtype=float)[perm]
    n = lu.shape[0]
    low = np.tril(lu, -1) + np.eye(n)
    return solve_upper(np.triu(lu), solve_lower(low, b))


def solve_small(a, b):
    """Solve ``a x = b`` by LU with partial pivoting (``b`` may have columns)."""
    return lu_solve(lu_factor(a), b)
