"""Half-overlapping fixed-size batches and chunk-level aggregation.

An epoch shuffles the ``N`` sample indices and cuts them into
``N // os`` chunks of ``os`` indices plus a remainder of ``N % os``. Batch
``j`` is the union of chunks ``j`` and ``j + 1``, so consecutive batches share
exactly one chunk and there are ``N // os - 1`` batches. A nonempty remainder
joins the last batch, making it a triple.
"""
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .errors import MissingEval, PointMismatch, TooFewSamples

CURRENT = "current"
TRIAL = "trial"


@dataclass(frozen=True)
class EpochPlan:
    n_samples: int
    chunk_size: int
    chunks: Tuple[np.ndarray, ...]
    remainder: np.ndarray

    @property
    def n_batches(self):
        return len(self.chunks) - 1

    @property
    def has_remainder(self):
        return self.remainder.size > 0

    def is_triple(self, j):
        return self.has_remainder and j == self.n_batches - 1

    def batch(self, j):
        """Indices of batch ``j`` (chunks ``j`` and ``j + 1``, plus the remainder if last)."""
        if not 0 <= j < self.n_batches:
            raise IndexError(f"batch {j} outside [0, {self.n_batches})")
        parts = [self.chunks[j]]
        if self.is_triple(j):
            parts.append(self.remainder)
        parts.append(self.chunks[j + 1])
        return np.concatenate(parts)


def plan_epoch(n_samples, chunk_size, rng):
    """Shuffle ``range(n_samples)`` and cut it into overlap chunks."""
    if chunk_size < 1:
        raise ValueError("chunk size must be at least 1")
    if n_samples < 2 * chunk_size:
        raise TooFewSamples(f"need at least {2 * chunk_size} samples for chunks of {chunk_size}, got {n_samples}")
    perm = rng.permutation(n_samples)
    n_chunks = n_samples // chunk_size
    cut = n_chunks * chunk_size
    chunks = tuple(perm[i * chunk_size:(i + 1) * chunk_size] for i in range(n_chunks))
    return EpochPlan(n_samples, chunk_size, chunks, perm[cut:])


def plain_batches(n_samples, batch_size, rng):
    """Shuffled non-overlapping batches; leftover indices join the last batch."""
    if n_samples < batch_size:
        raise TooFewSamples(f"need at least {batch_size} samples, got {n_samples}")
    perm = rng.permutation(n_samples)
    count = n_samples // batch_size
    out = [perm[i * batch_size:(i + 1) * batch_size] for i in range(count)]
    if count * batch_size < n_samples:
        out[-1] = np.concatenate([out[-1], perm[count * batch_size:]])
    return out


@dataclass(frozen=True)
class ChunkEval:
    """Mean loss and gradient of one chunk at a tagged point.

    ``at`` is :data:`CURRENT` or :data:`TRIAL`; ``iteration`` ties the tag to a
    specific iterate so stale evaluations are never mixed with fresh ones.
    """

    chunk_id: object
    loss: float
    grad: np.ndarray
    at: str
    iteration: int = 0


def _same_point(*evals):
    tags = {(e.at, e.iteration) for e in evals}
    if len(tags) != 1:
        raise PointMismatch(f"evaluations taken at different points: {sorted(tags)}")


def aggregate_duplex(prev, nxt):
    _same_point(prev, nxt)
    return 0.5 * (prev.loss + nxt.loss), 0.5 * (prev.grad + nxt.grad)


def triple_weight(chunk_size, rem_size):
    return chunk_size / (2 * chunk_size + rem_size)


def aggregate_triple(prev, rem, nxt, chunk_size, rem_size):
    """Size-weighted mean of two full chunks and the remainder."""
    if rem_size < 1:
        raise ValueError("a triple batch needs a nonempty remainder")
    _same_point(prev, rem, nxt)
    w = triple_weight(chunk_size, rem_size)
    wr = 1.0 - 2.0 * w
    loss = w * (prev.loss + nxt.loss) + wr * rem.loss
    grad = w * (prev.grad + nxt.grad) + wr * rem.grad
    return loss, grad


def carry_cache(plan, k, accepted, trial_evals, current_evals):
    """Evaluation of the shared chunk to reuse in batch ``k + 1``.

    Batch ``k`` evaluated chunk ``k + 1`` at both the current and the trial
    point. The next iterate is the trial point if the step was accepted, so
    that evaluation is returned; otherwise the current one. The result is
    re-tagged as the current point of iteration ``k + 1``.
    """
    cid = k + 1
    if cid >= len(plan.chunks):
        raise IndexError(f"batch {k} has no successor in this epoch")
    source = trial_evals if accepted else current_evals
    if cid not in source:
        raise MissingEval(f"chunk {cid} was not evaluated at the {'trial' if accepted else 'current'} point")
    return replace(source[cid], at=CURRENT, iteration=source[cid].iteration + 1)
