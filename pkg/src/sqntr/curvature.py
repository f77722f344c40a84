"""Storage for the most recent curvature pairs ``(s, y)``.

The buffer keeps ``S`` and ``Y`` column-wise (oldest first) together with the
Gram blocks ``S^T Y`` and ``S^T S`` which both compact representations and
the initial-scaling heuristics need. Gram blocks are updated with one new
row and column per push.
"""
import numpy as np

from .errors import DimensionMismatch, EmptyBuffer, ZeroStep

BFGS_TAU = 1e-2
SR1_TAU = 1e-8


def _step_norm(s):
    ns = float(np.linalg.norm(s))
    if ns == 0.0:
        raise ZeroStep("curvature pair with a zero step")
    return ns


def accept_bfgs_pair(s, y, tau=BFGS_TAU):
    """Curvature test ``s^T y > tau * ||s||^2``."""
    s = np.asarray(s, dtype=float)
    ns = _step_norm(s)
    return bool(s @ np.asarray(y, dtype=float) > tau * ns * ns)


def accept_sr1_pair(s, y, bs, tau=SR1_TAU):
    """SR1 safeguard ``|s^T (y - B s)| >= tau * ||s|| * ||y - B s||``.

    ``bs`` is the current approximation applied to ``s``. A vanishing
    residual ``y - B s`` is rejected: the update would be undefined.
    """
    s = np.asarray(s, dtype=float)
    ns = _step_norm(s)
    r = np.asarray(y, dtype=float) - np.asarray(bs, dtype=float)
    nr = float(np.linalg.norm(r))
    if nr == 0.0:
        return False
    return bool(abs(s @ r) >= tau * ns * nr)


class CurvaturePairBuffer:
    """The ``capacity`` most recent accepted pairs, oldest column first.

    Parameters
    ----------
    capacity : int
        Memory size ``l``.
    dim : int, optional
        Parameter dimension. Fixed by the first push when omitted.
    debug : bool
        Recompute the Gram blocks from scratch after every push and check
        them against the incremental update.
    """

    def __init__(self, capacity, dim=None, debug=False):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self.dim = dim
        self.debug = debug
        n = 0 if dim is None else dim
        self.S = np.zeros((n, 0))
        self.Y = np.zeros((n, 0))
        self.gram_sy = np.zeros((0, 0))
        self.gram_ss = np.zeros((0, 0))

    def __len__(self):
        return self.S.shape[1]

    def copy(self):
        out = CurvaturePairBuffer(self.capacity, self.dim, self.debug)
        out.S = self.S.copy()
        out.Y = self.Y.copy()
        out.gram_sy = self.gram_sy.copy()
        out.gram_ss = self.gram_ss.copy()
        return out

    def push(self, s, y):
        """Append a pair, evicting the oldest one when full. Returns ``self``."""
        s = np.asarray(s, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if s.shape != y.shape:
            raise DimensionMismatch(f"s has {s.size} entries, y has {y.size}")
        if self.dim is None:
            self.dim = s.size
            self.S = np.zeros((s.size, 0))
            self.Y = np.zeros((s.size, 0))
        elif s.size != self.dim:
            raise DimensionMismatch(f"expected vectors of length {self.dim}, got {s.size}")

        if len(self) == self.capacity:
            self.drop_oldest()

        sty_row = s @ self.Y          # s_new^T y_j
        sty_col = self.S.T @ y        # s_i^T y_new
        sts_col = self.S.T @ s
        m = len(self)
        sy = np.empty((m + 1, m + 1))
        sy[:m, :m] = self.gram_sy
        sy[m, :m] = sty_row
        sy[:m, m] = sty_col
        sy[m, m] = s @ y
        ss = np.empty((m + 1, m + 1))
        ss[:m, :m] = self.gram_ss
        ss[m, :m] = sts_col
        ss[:m, m] = sts_col
        ss[m, m] = s @ s

        self.S = np.column_stack([self.S, s])
        self.Y = np.column_stack([self.Y, y])
        self.gram_sy = sy
        self.gram_ss = ss
        if self.debug:
            self.check_gram()
        return self

    def drop_oldest(self):
        if len(self) == 0:
            raise EmptyBuffer("nothing to drop")
        self.S = self.S[:, 1:].copy()
        self.Y = self.Y[:, 1:].copy()
        self.gram_sy = self.gram_sy[1:, 1:].copy()
        self.gram_ss = self.gram_ss[1:, 1:].copy()
        return self

    def check_gram(self, rtol=1e-12):
        """Assert the cached Gram blocks match a fresh recomputation."""
        sy = self.S.T @ self.Y
        ss = self.S.T @ self.S
        for cached, fresh in ((self.gram_sy, sy), (self.gram_ss, ss)):
            scale = max(1.0, np.abs(fresh).max(initial=0.0))
            if np.abs(cached - fresh).max(initial=0.0) > rtol * scale:
                raise AssertionError("cached Gram block drifted from S^T Y / S^T S")


def push_pair(buf, s, y):
    return buf.push(s, y)


def split_gram(buf_or_matrix):
    """Split ``S^T Y`` into strictly lower, diagonal and strictly upper parts.

    Accepts a buffer or the Gram matrix itself. The three parts add back to
    the input exactly.
    """
    sy = buf_or_matrix.gram_sy if isinstance(buf_or_matrix, CurvaturePairBuffer) else np.asarray(buf_or_matrix, dtype=float)
    if sy.size == 0:
        raise EmptyBuffer("no curvature pairs stored")
    lower = np.tril(sy, -1)
    diag = np.diag(np.diag(sy))
    upper = np.triu(sy, 1)
    return lower, diag, upper
