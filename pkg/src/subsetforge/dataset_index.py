"""Annotation index: per-sample object counts, class frequencies, inverted index.

The on-disk ``.clsidx`` format is UTF-8 text with one JSON record per line::

    {"sample_id": "s1", "counts": {"car": 2, "pedestrian": 1}}

Blank lines and lines starting with ``#`` are ignored. A class missing from a
record has count 0 for that sample.
"""

from __future__ import annotations

import io
import json
import logging
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Union

import numpy as np

from .seeding import as_seed

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

# leaves headroom for int64 sums over millions of samples
_MAX_COUNT = 2**40


class IndexFormatError(ValueError):
    """Raised for malformed or invalid annotation-index input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    counts: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class DatasetIndex:
    """Ordered samples with a dense ``D x C`` matrix of per-class object counts.

    Class order (lexicographic at load time) defines the canonical class
    index ``k`` used by every downstream computation. The instance is
    immutable; ``counts`` is a read-only int64 array.
    """

    classes: tuple[str, ...]
    sample_ids: tuple[str, ...]
    counts: np.ndarray
    _ordinals: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        classes = tuple(self.classes)
        sample_ids = tuple(self.sample_ids)
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 2 or counts.shape != (len(sample_ids), len(classes)):
            raise IndexFormatError(
                f"counts shape {counts.shape} does not match "
                f"{len(sample_ids)} samples x {len(classes)} classes"
            )
        if not sample_ids:
            raise IndexFormatError("index has no samples")
        if not classes:
            raise IndexFormatError("index has no classes")
        if len(set(classes)) != len(classes):
            raise IndexFormatError("class names are not unique")
        ordinals = {}
        for o, sid in enumerate(sample_ids):
            if sid in ordinals:
                raise IndexFormatError(f"duplicate sample_id {sid!r}")
            ordinals[sid] = o
        if (counts < 0).any():
            raise IndexFormatError("negative object count")
        if counts.sum() < 1:
            raise IndexFormatError("index contains zero objects in total")
        counts.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "_ordinals", ordinals)

    @property
    def C(self) -> int:
        return len(self.classes)

    @property
    def D(self) -> int:
        return len(self.sample_ids)

    @property
    def samples(self) -> list[SampleRecord]:
        return [
            SampleRecord(sid, tuple(int(x) for x in row))
            for sid, row in zip(self.sample_ids, self.counts)
        ]

    def ordinal(self, sample_id: str) -> int:
        try:
            return self._ordinals[sample_id]
        except KeyError:
            raise KeyError(f"unknown sample_id {sample_id!r}") from None

    def class_index(self, name: str) -> int:
        return self.classes.index(name)

    def __eq__(self, other):
        if not isinstance(other, DatasetIndex):
            return NotImplemented
        return (
            self.classes == other.classes
            and self.sample_ids == other.sample_ids
            and np.array_equal(self.counts, other.counts)
        )

    def __hash__(self):
        return hash((self.classes, self.sample_ids, self.counts.tobytes()))


@dataclass(frozen=True, eq=False)
class ClassFrequencies:
    d_k: np.ndarray
    d: int
    p_dataset: np.ndarray


@dataclass(frozen=True, eq=False)
class InvertedIndex:
    """``lists[k]`` holds ascending ordinals of samples with >= 1 object of class k."""

    lists: tuple[np.ndarray, ...]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.lists[k]

    def __len__(self) -> int:
        return len(self.lists)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.lists)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(x) for x in self.lists], dtype=np.int64)


def _iter_lines(source) -> Iterator[tuple[int, str]]:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise IndexFormatError(f"invalid UTF-8: {exc}", lineno) from None
        yield lineno, raw


def _parse_record(text: str, lineno: int) -> tuple[str, dict[str, int]]:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"malformed record: {exc.msg}", lineno) from None
    if not isinstance(rec, dict) or set(rec) != {"sample_id", "counts"}:
        raise IndexFormatError(
            'record must be an object with exactly the keys "sample_id" and "counts"',
            lineno,
        )
    sid, counts = rec["sample_id"], rec["counts"]
    if not isinstance(sid, str) or not sid:
        raise IndexFormatError("sample_id must be a non-empty string", lineno)
    if not isinstance(counts, dict):
        raise IndexFormatError("counts must be an object", lineno)
    for name, value in counts.items():
        if isinstance(value, bool) or not isinstance(value, int):
            raise IndexFormatError(
                f"count for class {name!r} in {sid!r} is not an integer: {value!r}",
                lineno,
            )
        if value < 0:
            raise IndexFormatError(
                f"negative count {value} for class {name!r} in {sid!r}", lineno
            )
        if value > _MAX_COUNT:
            raise IndexFormatError(
                f"count {value} for class {name!r} in {sid!r} is too large", lineno
            )
    return sid, counts


def load_index(source: Union[BinaryIO, bytes, str, Iterable]) -> DatasetIndex:
    """Parse ``.clsidx`` content into a validated :class:`DatasetIndex`.

    ``source`` may be a binary or text stream, raw bytes, or a string of the
    file content. Classes whose total count is zero across the whole file are
    dropped, since no per-class statistic is defined for them.
    """
    records: list[tuple[str, dict[str, int]]] = []
    first_seen: dict[str, int] = {}
    names: set[str] = set()
    for lineno, raw in _iter_lines(source):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        sid, counts = _parse_record(text, lineno)
        if sid in first_seen:
            raise IndexFormatError(
                f"duplicate sample_id {sid!r} (first seen on line {first_seen[sid]})",
                lineno,
            )
        first_seen[sid] = lineno
        names.update(counts)
        records.append((sid, counts))
    if not records:
        raise IndexFormatError("empty index: no records found")

    all_classes = sorted(names)
    col = {name: k for k, name in enumerate(all_classes)}
    dense = np.zeros((len(records), len(all_classes)), dtype=np.int64)
    for o, (_, counts) in enumerate(records):
        for name, value in counts.items():
            dense[o, col[name]] = value
    if dense.sum() < 1:
        raise IndexFormatError("index contains zero objects in total")
    keep = dense.sum(axis=0) > 0
    if not keep.all():
        dropped = [c for c, kept in zip(all_classes, keep) if not kept]
        logger.warning("dropping classes with no objects: %s", ", ".join(dropped))
    classes = [c for c, kept in zip(all_classes, keep) if kept]
    return DatasetIndex(tuple(classes), tuple(s for s, _ in records), dense[:, keep])


def read_index(path: PathLike) -> DatasetIndex:
    with open(path, "rb") as fh:
        return load_index(fh)


def dump_index(index: DatasetIndex) -> str:
    """Serialise to ``.clsidx`` text; zero counts are omitted."""
    lines = []
    for sid, row in zip(index.sample_ids, index.counts.tolist()):
        counts = {c: v for c, v in zip(index.classes, row) if v}
        lines.append(json.dumps({"sample_id": sid, "counts": counts}, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def write_index(index: DatasetIndex, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_index(index))


def dataset_frequencies(index: DatasetIndex) -> ClassFrequencies:
    d_k = index.counts.sum(axis=0)
    d = int(d_k.sum())
    p = d_k / d
    d_k.setflags(write=False)
    p.setflags(write=False)
    return ClassFrequencies(d_k=d_k, d=d, p_dataset=p)


def build_inverted_index(index: DatasetIndex) -> InvertedIndex:
    lists = []
    for k in range(index.C):
        ords = np.flatnonzero(index.counts[:, k] >= 1).astype(np.int64)
        ords.setflags(write=False)
        lists.append(ords)
    return InvertedIndex(tuple(lists))


def generate_synthetic(
    C: int,
    D: int,
    tail_exponent: float,
    mean_objects_per_sample: float,
    seed: int,
    *,
    scene_shape: float = 2.0,
    burst_shape: float = 2.0,
    burst_exponent: float = 0.5,
) -> DatasetIndex:
    """Generate a long-tailed synthetic index.

    Class ``k`` (1-based) has popularity ``w_k`` proportional to
    ``k ** -tail_exponent``. Sample ``i`` gets a scene density
    ``s_i ~ Gamma(scene_shape)`` shared by all classes and, per class, a
    burst factor ``g_ik ~ Gamma(b_k)`` with
    ``b_k = burst_shape * (w_k / w_1) ** burst_exponent``; both factors have
    mean 1. Counts are ``Poisson(mean_objects_per_sample * s_i * g_ik * w_k)``.

    The shared density makes busy scenes busy in every class; the
    popularity-dependent burst shape makes rare classes appear in fewer
    samples but in clumps. Both traits are typical of driving datasets and
    are what separate the three samplers.

    Class names are ``class_01 ... class_C`` so that lexicographic order is
    popularity order; sample ids are ``synth-000001 ...``.
    """
    for name, value in (("C", C), ("D", D)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    for name, value in (
        ("tail_exponent", tail_exponent),
        ("mean_objects_per_sample", mean_objects_per_sample),
        ("scene_shape", scene_shape),
        ("burst_shape", burst_shape),
    ):
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"{name} must be a positive real, got {value!r}")
    if not np.isfinite(burst_exponent) or burst_exponent < 0:
        raise ValueError(f"burst_exponent must be >= 0, got {burst_exponent!r}")

    rng = np.random.default_rng(as_seed(seed))
    weights = np.arange(1, C + 1, dtype=np.float64) ** -float(tail_exponent)
    weights /= weights.sum()
    burst = burst_shape * (weights / weights[0]) ** burst_exponent
    scene = rng.gamma(scene_shape, 1.0 / scene_shape, size=D)
    g = rng.gamma(burst, 1.0 / burst, size=(D, C))
    counts = rng.poisson(float(mean_objects_per_sample) * scene[:, None] * g * weights)
    for k in range(C):
        if counts[:, k].sum() == 0:
            counts[int(rng.integers(D)), k] = 1

    width = max(2, len(str(C)))
    classes = tuple(f"class_{k:0{width}d}" for k in range(1, C + 1))
    id_width = max(6, len(str(D)))
    sample_ids = tuple(f"synth-{i:0{id_width}d}" for i in range(1, D + 1))
    return DatasetIndex(classes, sample_ids, counts)
