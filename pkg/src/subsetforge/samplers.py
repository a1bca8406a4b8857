"""Subset selection: random, random per class, and MONSPeC.

All three samplers return a :class:`Subset`, an ordered multiset of sample
ordinals. The per-class methods tag every entry with the class it was drawn
for; the same sample may appear once per class list it belongs to.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, Union

import numpy as np

from .dataset_index import ClassFrequencies, DatasetIndex, InvertedIndex, dataset_frequencies
from .seeding import as_seed, mix

logger = logging.getLogger(__name__)

METHODS = ("random", "per_class", "monspec")
NO_CLASS = -1


def normalize_method(name: str) -> str:
    """Accept ``per-class`` / ``per_class`` spellings; reject unknown names."""
    key = name.strip().lower().replace("-", "_")
    if key not in METHODS:
        raise ValueError(f"unknown sampling method {name!r}; expected one of {', '.join(METHODS)}")
    return key


@dataclass(frozen=True)
class Shortfall:
    class_index: int
    quota: int
    available: int


@dataclass(frozen=True, eq=False)
class Subset:
    """Selected entries as parallel arrays.

    ``provenance[i]`` is the class index entry ``i`` was drawn for, or
    ``NO_CLASS`` (-1) for plain random sampling.
    """

    ordinals: np.ndarray
    provenance: np.ndarray
    method: str
    shortfalls: tuple[Shortfall, ...] = ()

    @property
    def N(self) -> int:
        return len(self.ordinals)

    @property
    def entries(self) -> list[tuple[int, Optional[int]]]:
        return [
            (int(o), None if p == NO_CLASS else int(p))
            for o, p in zip(self.ordinals, self.provenance)
        ]

    def sample_ids(self, index: DatasetIndex) -> list[str]:
        return [index.sample_ids[o] for o in self.ordinals]

    def __eq__(self, other):
        if not isinstance(other, Subset):
            return NotImplemented
        return (
            self.method == other.method
            and np.array_equal(self.ordinals, other.ordinals)
            and np.array_equal(self.provenance, other.provenance)
            and self.shortfalls == other.shortfalls
        )

    __hash__ = None


def _subset(method, ordinals, provenance, shortfalls=()) -> Subset:
    ordinals = np.asarray(ordinals, dtype=np.int64)
    provenance = np.asarray(provenance, dtype=np.int64)
    ordinals.setflags(write=False)
    provenance.setflags(write=False)
    return Subset(ordinals, provenance, method, tuple(shortfalls))


def resolve_size(index: DatasetIndex, size: Union[float, int], method: str = "random") -> int:
    """Turn a fraction of ``D`` (float) or an absolute count (int) into ``N``.

    Fractions round half-up on the decimal value and are clamped to ``[1, D]``.
    """
    method = normalize_method(method)
    D = index.D
    if isinstance(size, bool):
        raise TypeError("size must be a fraction (float) or a count (int)")
    if isinstance(size, (int, np.integer)):
        N = int(size)
        if N < 1:
            raise ValueError(f"subset size must be >= 1, got {N}")
        if method == "random" and N > D:
            raise ValueError(f"random sampling needs N <= D, got N={N} > D={D}")
        return N
    f = float(size)
    if not (0.0 < f <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {size!r}")
    N = int((Decimal(repr(f)) * D).to_integral_value(rounding=ROUND_HALF_UP))
    return min(max(N, 1), D)


def quota_per_class(N: int, frequencies: ClassFrequencies) -> np.ndarray:
    """Split ``N`` into per-class quotas.

    Every class gets ``N // C``; the remaining ``N mod C`` slots go one each
    to the classes with the fewest objects (ties by class order).
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    d_k = np.asarray(frequencies.d_k)
    C = len(d_k)
    base, rem = divmod(int(N), C)
    quotas = np.full(C, base, dtype=np.int64)
    quotas[np.argsort(d_k, kind="stable")[:rem]] += 1
    quotas.setflags(write=False)
    return quotas


def _check_quotas(quotas, C: int) -> np.ndarray:
    quotas = np.asarray(quotas, dtype=np.int64)
    if quotas.shape != (C,):
        raise ValueError(f"expected {C} quotas, got shape {quotas.shape}")
    if (quotas < 0).any():
        raise ValueError("quotas must be non-negative")
    return quotas


def sample_random(index: DatasetIndex, N: int, seed: int) -> Subset:
    """Draw ``N`` distinct samples uniformly; entries are in draw order."""
    D = index.D
    if not 1 <= N <= D:
        raise ValueError(f"random sampling needs 1 <= N <= D, got N={N}, D={D}")
    rng = np.random.default_rng(as_seed(seed))
    ordinals = rng.choice(D, size=int(N), replace=False, shuffle=True)
    return _subset("random", ordinals, np.full(N, NO_CLASS))


def _assemble(method, parts, shortfalls) -> Subset:
    if parts:
        ordinals = np.concatenate([p for p, _ in parts])
        provenance = np.concatenate([np.full(len(p), k) for p, k in parts])
    else:
        ordinals = provenance = np.empty(0, dtype=np.int64)
    for s in shortfalls:
        logger.debug("class %d: quota %d but only %d samples", s.class_index, s.quota, s.available)
    return _subset(method, ordinals, provenance, shortfalls)


def sample_per_class(
    index: DatasetIndex, inverted: InvertedIndex, quotas, seed: int
) -> Subset:
    """Draw ``quotas[k]`` distinct samples uniformly from each class list.

    Class ``k`` uses its own generator seeded with ``mix(seed, k)``, so each
    class's draw is independent of the others. A class whose list is shorter
    than its quota contributes its whole list and a :class:`Shortfall`.
    """
    quotas = _check_quotas(quotas, index.C)
    seed = as_seed(seed)
    parts, shortfalls = [], []
    for k, q in enumerate(quotas.tolist()):
        idx_k = inverted[k]
        m = len(idx_k)
        if q > m:
            shortfalls.append(Shortfall(k, q, m))
            picked = idx_k
        elif q == 0:
            continue
        else:
            rng = np.random.default_rng(mix(seed, k))
            picked = idx_k[rng.choice(m, size=q, replace=False, shuffle=True)]
        if len(picked):
            parts.append((picked, k))
    return _assemble("per_class", parts, shortfalls)


def monspec_order(index: DatasetIndex, inverted: InvertedIndex, k: int) -> np.ndarray:
    """Class list ``k`` sorted by class-k count descending, then ordinal ascending."""
    idx_k = inverted[k]
    return idx_k[np.lexsort((idx_k, -index.counts[idx_k, k]))]


def sample_monspec(index: DatasetIndex, inverted: InvertedIndex, quotas) -> Subset:
    """Take, for each class, the ``quotas[k]`` samples richest in that class."""
    quotas = _check_quotas(quotas, index.C)
    parts, shortfalls = [], []
    for k, q in enumerate(quotas.tolist()):
        m = len(inverted[k])
        if q > m:
            shortfalls.append(Shortfall(k, q, m))
        if q == 0 or m == 0:
            continue
        parts.append((monspec_order(index, inverted, k)[:q], k))
    return _assemble("monspec", parts, shortfalls)


def draw(
    index: DatasetIndex,
    inverted: InvertedIndex,
    method: str,
    N: int,
    seed: int = 0,
    quotas=None,
    frequencies: ClassFrequencies | None = None,
) -> Subset:
    """Dispatch to one sampler. ``quotas`` defaults to :func:`quota_per_class`."""
    method = normalize_method(method)
    if method == "random":
        return sample_random(index, N, seed)
    if quotas is None:
        quotas = quota_per_class(N, frequencies or dataset_frequencies(index))
    if method == "per_class":
        return sample_per_class(index, inverted, quotas, seed)
    return sample_monspec(index, inverted, quotas)


# ``.subset`` files: one sample_id per line, duplicates repeated, ``#`` comments.


def format_subset(
    index: DatasetIndex, subset: Subset, comments: Iterable[str] = ()
) -> str:
    lines = subset.sample_ids(index)
    lines += [f"# {c}" for c in comments]
    return "\n".join(lines) + "\n"


def write_subset(path, index: DatasetIndex, subset: Subset, comments: Iterable[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_subset(index, subset, comments))


def parse_subset_ids(text: str) -> list[str]:
    ids = []
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            ids.append(line)
    return ids


def read_subset(path: Union[str, os.PathLike], index: DatasetIndex) -> Subset:
    """Load a ``.subset`` file and resolve ids against ``index``.

    Provenance is not stored in the file, so entries come back untagged.
    """
    with open(path, encoding="utf-8") as fh:
        ids = parse_subset_ids(fh.read())
    return subset_from_ids(index, ids)


def subset_from_ids(index: DatasetIndex, ids: Iterable[str]) -> Subset:
    ordinals = []
    for sid in ids:
        try:
            ordinals.append(index.ordinal(sid))
        except KeyError:
            raise ValueError(f"subset references unknown sample_id {sid!r}") from None
    return _subset("file", ordinals, np.full(len(ordinals), NO_CLASS))
