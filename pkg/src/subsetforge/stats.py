"""Subset quality metrics: class frequencies, L1 drift, normalised object counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_index import ClassFrequencies, DatasetIndex
from .samplers import Subset


class DegenerateSubsetError(ValueError):
    """The subset holds no objects, so its class distribution is undefined."""


@dataclass(frozen=True, eq=False)
class SubsetStats:
    N: int
    n: int
    n_k: np.ndarray
    p_subset: np.ndarray
    l1: float
    n_norm: np.ndarray
    n_norm_min: float
    n_norm_avg: float

    def to_record(self, classes) -> dict:
        """Plain-Python mapping with per-class vectors keyed by class name."""
        return {
            "N": self.N,
            "n": self.n,
            "l1": self.l1,
            "n_norm_min": self.n_norm_min,
            "n_norm_avg": self.n_norm_avg,
            "n_k": dict(zip(classes, self.n_k.tolist())),
            "p_subset": dict(zip(classes, self.p_subset.tolist())),
            "n_norm": dict(zip(classes, self.n_norm.tolist())),
        }


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if (v < 0).any() or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability vector")
    return float(np.abs(p - q).sum())


def normalized_counts(n_k, N: int, D: int, d_k) -> tuple[np.ndarray, float, float]:
    """Object counts relative to their expectation under uniform random sampling.

    Returns ``(n_norm, n_norm_min, n_norm_avg)`` with
    ``n_norm_k = n_k * D / (N * d_k)``.
    """
    if N <= 0:
        raise ValueError(f"N must be positive, got {N}")
    d_k = np.asarray(d_k, dtype=np.float64)
    if (d_k <= 0).any():
        raise ValueError("every class needs d_k > 0")
    n_norm = np.asarray(n_k, dtype=np.float64) * D / (N * d_k)
    return n_norm, float(n_norm.min()), float(n_norm.mean())


def object_counts(index: DatasetIndex, ordinals) -> np.ndarray:
    """Per-class object totals over ``ordinals``, repeated ordinals counted again."""
    return np.einsum("ij->j", index.counts[ordinals])


class MetricKernel:
    """Precomputed constants for evaluating many subsets of one index.

    ``metrics(n_k, N)`` returns ``(l1, n_norm_min, n_norm_avg)``; it is the
    inner loop of the trial engine and skips the input validation done by the
    public functions.
    """

    def __init__(self, index: DatasetIndex, frequencies: ClassFrequencies):
        self.counts = index.counts
        self.D = index.D
        self.p_dataset = np.asarray(frequencies.p_dataset, dtype=np.float64)
        self.d_k = np.asarray(frequencies.d_k, dtype=np.float64)

    def counts_of(self, ordinals) -> np.ndarray:
        return np.einsum("ij->j", self.counts[ordinals])

    def metrics(self, n_k: np.ndarray, N: int) -> tuple[float, float, float]:
        n = int(n_k.sum())
        if n == 0:
            raise DegenerateSubsetError("subset contains no objects")
        l1 = float(np.abs(self.p_dataset - n_k / n).sum())
        # same operation order as subset_stats so results agree bitwise
        n_norm = np.asarray(n_k, dtype=np.float64) * self.D / (N * self.d_k)
        return l1, float(n_norm.min()), float(n_norm.mean())


def subset_stats(
    index: DatasetIndex, frequencies: ClassFrequencies, subset: Subset
) -> SubsetStats:
    N = subset.N
    if N == 0:
        raise DegenerateSubsetError("subset is empty")
    ordinals = np.asarray(subset.ordinals)
    if ordinals.min() < 0 or ordinals.max() >= index.D:
        raise IndexError("subset references an ordinal outside the index")
    n_k = object_counts(index, ordinals)
    n = int(n_k.sum())
    if n == 0:
        raise DegenerateSubsetError(
            f"subset of {N} samples contains no objects; statistics are undefined"
        )
    p_subset = n_k / n
    l1 = float(np.abs(np.asarray(frequencies.p_dataset) - p_subset).sum())
    n_norm, n_min, n_avg = normalized_counts(n_k, N, index.D, frequencies.d_k)
    return SubsetStats(
        N=N,
        n=n,
        n_k=n_k,
        p_subset=p_subset,
        l1=l1,
        n_norm=n_norm,
        n_norm_min=n_min,
        n_norm_avg=n_avg,
    )
