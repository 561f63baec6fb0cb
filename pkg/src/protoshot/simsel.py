"""Similarity scoring, top-K selection, and average pooling kernels.

These are the stateless numerical primitives behind every method in
``adapters``: score each patch against a class vector, keep the K best,
pool a chosen subset into a single slide embedding. All reductions run in
float64 regardless of the float32 storage precision, and within-bag
reductions follow row order so results never depend on caller-side
ordering or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedstore import PatchMatrix
from .errors import DimensionMismatch, EmptySubset


@dataclass(frozen=True)
class SelectionResult:
    """Indices of the best-scoring patches, score-descending (ties by index)."""

    indices: np.ndarray
    effective_k: int

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)


def score_against(bag: PatchMatrix, class_vector: np.ndarray) -> np.ndarray:
    """Dot product of every patch row with `class_vector`, in float64.

    For unit-norm inputs this is cosine similarity. The class vector is not
    re-normalized, so the result is linear in it.
    """
    w = np.asarray(class_vector, dtype=np.float64).reshape(-1)
    if w.shape[0] != bag.dim:
        raise DimensionMismatch(bag.dim, w.shape[0])
    return bag.values.astype(np.float64) @ w


def top_k(scores: np.ndarray, k: int) -> SelectionResult:
    """Select the k highest scores; k above the score count clamps.

    Ordering is deterministic: score descending, then original index
    ascending. The clamp is reported through ``effective_k``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    effective = min(k, s.shape[0])
    order = np.argsort(-s, kind="stable")
    return SelectionResult(order[:effective], effective)


def bgap(bag: PatchMatrix, subset: np.ndarray | None = None) -> np.ndarray:
    """Element-wise mean of the chosen rows (all rows when `subset` is None).

    The pooled vector is returned at float64 precision and is NOT
    re-normalized; normalization is the caller's policy. Subset rows are
    pooled in row order, so the result is independent of the order the
    indices arrive in.
    """
    if subset is None:
        rows = bag.values
    else:
        idx = np.asarray(subset, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            raise EmptySubset()
        if ((idx < 0) | (idx >= bag.rows)).any():
            raise IndexError(f"subset indices out of range for {bag.rows} rows")
        rows = bag.values[np.sort(idx)]
    return rows.astype(np.float64).mean(axis=0)
