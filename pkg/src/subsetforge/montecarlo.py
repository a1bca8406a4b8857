"""Monte-Carlo characterisation of the samplers.

``run_trials`` draws many independently seeded subsets and records three
metrics per draw; ``summarize`` and ``exceedance`` reduce the result to the
box-plot numbers; ``enumerate_exact`` is an exhaustive oracle for small
indexes; ``bench_sampler`` times single draws.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .dataset_index import (
    ClassFrequencies,
    DatasetIndex,
    InvertedIndex,
    build_inverted_index,
    dataset_frequencies,
)
from .samplers import (
    normalize_method,
    quota_per_class,
    resolve_size,
    sample_monspec,
    sample_per_class,
    sample_random,
)
from .seeding import as_seed, mix, mix_range
from .stats import MetricKernel

METRICS = ("n_norm_min", "n_norm_avg", "l1")
DEFAULT_FRACTIONS = (0.05, 0.1, 0.2, 0.4, 0.8)
EXCEEDANCE_METRIC = "p_n_norm_min_below_1"
CSV_COLUMNS = ("method", "fraction", "N", "trials", "metric", "min", "q1", "median", "q3", "max", "mean")


class TrialError(RuntimeError):
    def __init__(self, trial: int, cause: BaseException):
        self.trial = trial
        super().__init__(f"trial {trial} failed: {cause}")


class StateSpaceTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrialMatrix:
    method: str
    N: int
    trials: int
    master_seed: int
    l1: np.ndarray
    n_norm_min: np.ndarray
    n_norm_avg: np.ndarray
    shortfall_trials: int = 0

    def values(self, metric: str) -> np.ndarray:
        if metric not in METRICS:
            raise KeyError(metric)
        return getattr(self, metric)

    def __eq__(self, other):
        if not isinstance(other, TrialMatrix):
            return NotImplemented
        return (
            (self.method, self.N, self.trials, self.master_seed, self.shortfall_trials)
            == (other.method, other.N, other.trials, other.master_seed, other.shortfall_trials)
            and all(np.array_equal(self.values(m), other.values(m)) for m in METRICS)
        )

    __hash__ = None


class _TrialJob:
    """Everything a worker needs to evaluate a contiguous block of trials."""

    def __init__(self, index, frequencies, inverted, method, N, quotas, master_seed):
        self.index = index
        self.inverted = inverted
        self.method = method
        self.N = N
        self.quotas = quotas
        self.master_seed = master_seed
        self.kernel = MetricKernel(index, frequencies)

    def draw(self, seed: int):
        if self.method == "random":
            return sample_random(self.index, self.N, seed)
        if self.method == "per_class":
            return sample_per_class(self.index, self.inverted, self.quotas, seed)
        return sample_monspec(self.index, self.inverted, self.quotas)

    def run(self, start: int, stop: int):
        out = np.empty((3, stop - start), dtype=np.float64)
        shortfalls = 0
        kernel = self.kernel
        for j, seed in enumerate(mix_range(self.master_seed, start, stop).tolist()):
            try:
                subset = self.draw(seed)
                out[:, j] = kernel.metrics(kernel.counts_of(subset.ordinals), subset.N)
            except Exception as exc:
                raise TrialError(start + j, exc) from exc
            shortfalls += bool(subset.shortfalls)
        return start, out, shortfalls


_worker_job: Optional[_TrialJob] = None


def _install_job(job: _TrialJob) -> None:
    global _worker_job
    _worker_job = job


def _run_block(bounds):
    return _worker_job.run(*bounds)


def _blocks(trials: int, workers: int) -> list[tuple[int, int]]:
    if workers <= 1:
        return [(0, trials)]
    size = max(1, math.ceil(trials / (workers * 4)))
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def run_trials(
    index: DatasetIndex,
    frequencies: ClassFrequencies,
    inverted: InvertedIndex,
    method: str,
    N: int,
    trials: int,
    master_seed: int,
    *,
    workers: int = 1,
) -> TrialMatrix:
    """Draw ``trials`` subsets and record ``l1``, ``n_norm_min``, ``n_norm_avg``.

    Trial ``i`` is seeded with ``mix(master_seed, i)`` and its metrics land in
    slot ``i``, so the result does not depend on ``workers``. MONSPeC is
    deterministic and always runs a single trial.
    """
    method = normalize_method(method)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if method == "monspec":
        trials = 1
    if method == "random":
        if not 1 <= N <= index.D:
            raise ValueError(f"random sampling needs 1 <= N <= D, got N={N}, D={index.D}")
        quotas = None
    else:
        quotas = quota_per_class(N, frequencies)
    master_seed = as_seed(master_seed)
    job = _TrialJob(index, frequencies, inverted, method, int(N), quotas, master_seed)

    blocks = _blocks(trials, workers)
    if len(blocks) == 1:
        results = [job.run(*blocks[0])]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_install_job, initargs=(job,)
        ) as pool:
            results = list(pool.map(_run_block, blocks))

    values = np.empty((3, trials), dtype=np.float64)
    shortfall_trials = 0
    for start, block, shortfalls in results:
        values[:, start : start + block.shape[1]] = block
        shortfall_trials += shortfalls
    for row in values:
        row.setflags(write=False)
    return TrialMatrix(method, int(N), trials, master_seed, *values, shortfall_trials)


@dataclass(frozen=True)
class DistributionSummary:
    metric: str
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def summarize(values, metric: str) -> DistributionSummary:
    """Box-plot numbers; quartiles interpolate linearly at rank ``p * (count - 1)``."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError(f"cannot summarise empty {metric} values")
    q1, median, q3 = np.quantile(values, (0.25, 0.5, 0.75), method="linear")
    return DistributionSummary(
        metric=metric,
        count=int(values.size),
        min=float(values.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        max=float(values.max()),
        mean=float(values.mean()),
    )


def exceedance(values, threshold: float) -> float:
    """Fraction of ``values`` strictly below ``threshold``."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot compute exceedance of empty values")
    return float(np.count_nonzero(values < threshold) / values.size)


@dataclass(frozen=True)
class ExactDistribution:
    """Exact law of ``(l1, n_norm_min, n_norm_avg)`` over all equally likely draws."""

    method: str
    N: int
    n_draws: int
    outcomes: dict = field(repr=False)

    def marginal(self, metric: str) -> dict[float, Fraction]:
        pos = {"l1": 0, "n_norm_min": 1, "n_norm_avg": 2}[metric]
        out: dict[float, Fraction] = {}
        for triple, prob in self.outcomes.items():
            out[triple[pos]] = out.get(triple[pos], Fraction(0)) + prob
        return out

    def mean(self, metric: str) -> float:
        return float(sum(Fraction(v) * p for v, p in self.marginal(metric).items()))

    def std(self, metric: str) -> float:
        mu = self.mean(metric)
        return math.sqrt(sum(float(p) * (v - mu) ** 2 for v, p in self.marginal(metric).items()))


def _state_space(index, inverted, method, N, quotas) -> int:
    if method == "random":
        return math.comb(index.D, N)
    if method == "per_class":
        return math.prod(
            math.comb(len(inverted[k]), min(int(q), len(inverted[k])))
            for k, q in enumerate(quotas)
        )
    return 1


def enumerate_exact(
    index: DatasetIndex,
    method: str,
    N: int,
    *,
    limit: int = 10**6,
) -> ExactDistribution:
    """Enumerate every equally likely outcome of one sampler draw.

    ``random`` walks all ``C(D, N)`` subsets; ``per_class`` walks the product
    of the per-class ``C(|idx_k|, q_k)`` choices; ``monspec`` has one outcome.
    Raises :class:`StateSpaceTooLarge` beyond ``limit`` outcomes.
    """
    method = normalize_method(method)
    frequencies = dataset_frequencies(index)
    inverted = build_inverted_index(index)
    if method == "random" and not 1 <= N <= index.D:
        raise ValueError(f"random sampling needs 1 <= N <= D, got N={N}, D={index.D}")
    quotas = None if method == "random" else quota_per_class(N, frequencies)
    size = _state_space(index, inverted, method, N, quotas)
    if size > limit:
        raise StateSpaceTooLarge(
            f"{method} with N={N} has {size} outcomes, above the limit of {limit}"
        )

    counts = index.counts.tolist()
    C = index.C
    # multiset of per-class object-count vectors, each with its number of draws
    if method == "random":
        vectors: Counter = Counter()
        for combo in itertools.combinations(range(index.D), N):
            vectors[tuple(map(sum, zip(*(counts[o] for o in combo))))] += 1
        entries = N
    elif method == "per_class":
        vectors = Counter({(0,) * C: 1})
        entries = 0
        for k, q in enumerate(quotas.tolist()):
            members = inverted[k].tolist()
            take = min(q, len(members))
            entries += take
            partial: Counter = Counter()
            for combo in itertools.combinations(members, take):
                partial[tuple(sum(counts[o][j] for o in combo) for j in range(C))] += 1
            merged: Counter = Counter()
            for v, a in vectors.items():
                for w, b in partial.items():
                    merged[tuple(x + y for x, y in zip(v, w))] += a * b
            vectors = merged
    else:
        subset = sample_monspec(index, inverted, quotas)
        n_k = tuple(int(x) for x in index.counts[subset.ordinals].sum(axis=0))
        vectors, entries = Counter({n_k: 1}), subset.N

    kernel = MetricKernel(index, frequencies)
    outcomes: dict = {}
    for v, ways in sorted(vectors.items()):
        triple = kernel.metrics(np.array(v, dtype=np.int64), entries)
        outcomes[triple] = outcomes.get(triple, Fraction(0)) + Fraction(ways, size)
    return ExactDistribution(method, entries, size, outcomes)


@dataclass(frozen=True)
class BenchResult:
    method: str
    N: int
    runs: int
    mean: float
    min: float
    max: float
    distinct_outputs: int


def bench_sampler(
    index: DatasetIndex,
    method: str,
    N: int,
    runs: int,
    *,
    seed: int = 0,
    inverted: InvertedIndex | None = None,
    frequencies: ClassFrequencies | None = None,
) -> BenchResult:
    """Wall-clock seconds per draw over ``runs`` draws, after one untimed warm-up.

    Only the sampler call is timed; index, inverted index and quotas are
    prepared beforehand. ``distinct_outputs`` counts distinct subsets seen.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    method = normalize_method(method)
    inverted = inverted or build_inverted_index(index)
    frequencies = frequencies or dataset_frequencies(index)
    if method == "random":
        def call(s):
            return sample_random(index, N, s)
    else:
        quotas = quota_per_class(N, frequencies)
        if method == "per_class":
            def call(s):
                return sample_per_class(index, inverted, quotas, s)
        else:
            def call(s):
                return sample_monspec(index, inverted, quotas)

    call(mix(seed, runs))
    times = np.empty(runs)
    digests = set()
    clock = time.perf_counter
    for r in range(runs):
        s = mix(seed, r)
        t0 = clock()
        subset = call(s)
        times[r] = clock() - t0
        digests.add(subset.ordinals.tobytes())
    return BenchResult(
        method, int(N), runs, float(times.mean()), float(times.min()), float(times.max()), len(digests)
    )


@dataclass(frozen=True)
class ReportCell:
    method: str
    fraction: Optional[float]
    N: int
    trials: int
    summaries: dict
    p_n_norm_min_below_1: float
    shortfall_trials: int


@dataclass(frozen=True)
class MonteCarloReport:
    cells: tuple[ReportCell, ...]
    master_seed: int

    def cell(self, method: str, fraction: float) -> ReportCell:
        method = normalize_method(method)
        for c in self.cells:
            if c.method == method and c.fraction == fraction:
                return c
        raise KeyError((method, fraction))

    def rows(self) -> list[dict]:
        rows = []
        for c in self.cells:
            head = {"method": c.method, "fraction": c.fraction, "N": c.N, "trials": c.trials}
            for m in METRICS:
                s = c.summaries[m]
                rows.append(
                    dict(head, metric=m, min=s.min, q1=s.q1, median=s.median, q3=s.q3, max=s.max, mean=s.mean)
                )
            rows.append(dict(head, metric=EXCEEDANCE_METRIC, mean=c.p_n_norm_min_below_1))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n", restval="")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def simulate(
    index: DatasetIndex,
    methods: Sequence[str] = ("random", "per_class", "monspec"),
    sizes: Iterable = DEFAULT_FRACTIONS,
    trials: int = 10**6,
    master_seed: int = 0,
    *,
    workers: int = 1,
    progress=None,
) -> MonteCarloReport:
    """Run the method x size grid. Sizes are fractions (float) or counts (int).

    Every cell uses the same ``master_seed``. ``progress``, if given, is
    called with each finished :class:`ReportCell`.
    """
    frequencies = dataset_frequencies(index)
    inverted = build_inverted_index(index)
    cells = []
    for method in (normalize_method(m) for m in methods):
        for size in sizes:
            N = resolve_size(index, size, method)
            tm = run_trials(index, frequencies, inverted, method, N, trials, master_seed, workers=workers)
            cell = ReportCell(
                method=method,
                fraction=float(size) if isinstance(size, float) else None,
                N=N,
                trials=tm.trials,
                summaries={m: summarize(tm.values(m), m) for m in METRICS},
                p_n_norm_min_below_1=exceedance(tm.n_norm_min, 1.0),
                shortfall_trials=tm.shortfall_trials,
            )
            cells.append(cell)
            if progress is not None:
                progress(cell)
    return MonteCarloReport(tuple(cells), as_seed(master_seed))
