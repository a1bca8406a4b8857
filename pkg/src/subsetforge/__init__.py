"""Subset selection for object-detection training sets and Monte-Carlo analysis of the samplers."""

from .dataset_index import (
    ClassFrequencies,
    DatasetIndex,
    IndexFormatError,
    InvertedIndex,
    SampleRecord,
    build_inverted_index,
    dataset_frequencies,
    dump_index,
    generate_synthetic,
    load_index,
    read_index,
    write_index,
)
from .montecarlo import (
    BenchResult,
    DistributionSummary,
    ExactDistribution,
    MonteCarloReport,
    StateSpaceTooLarge,
    TrialError,
    TrialMatrix,
    bench_sampler,
    enumerate_exact,
    exceedance,
    run_trials,
    simulate,
    summarize,
)
from .samplers import (
    METHODS,
    Shortfall,
    Subset,
    draw,
    quota_per_class,
    read_subset,
    resolve_size,
    sample_monspec,
    sample_per_class,
    sample_random,
    write_subset,
)
from .stats import DegenerateSubsetError, SubsetStats, l1_distance, normalized_counts, subset_stats

__version__ = "0.1.0"
