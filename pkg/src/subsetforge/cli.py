"""Command-line interface.

Exit codes: 0 success (warnings allowed), 1 usage error, 2 data or
validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .dataset_index import (
    build_inverted_index,
    dataset_frequencies,
    dump_index,
    generate_synthetic,
    load_index,
    write_index,
)
from .montecarlo import DEFAULT_FRACTIONS, bench_sampler, simulate
from .samplers import (
    METHODS,
    draw,
    format_subset,
    normalize_method,
    parse_subset_ids,
    resolve_size,
    subset_from_ids,
)
from .seeding import as_seed
from .stats import subset_stats

log = logging.getLogger("subsetforge")

SEED_ENV = "SUBSETFORGE_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

BENCH_NOTE = (
    "sampling runs once per experiment; its cost is negligible next to training"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _method(text: str) -> str:
    try:
        return normalize_method(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fraction(text: str) -> float:
    try:
        f = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a decimal fraction: {text!r}") from None
    if not 0.0 < f <= 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1], got {text}")
    return f


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def digest64(data: bytes) -> str:
    """64-bit BLAKE2b content hash as 16 hex digits."""
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _load(path: str):
    data = _read_bytes(path)
    return load_index(data), digest64(data)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_manifest(out: Optional[str], argv: Sequence[str], **fields) -> None:
    """Write ``<out>.manifest.json`` next to a file output.

    The timestamp lives only here so the primary output stays byte-stable.
    """
    if out is None or out == "-":
        return
    manifest = {
        "tool": "subsetforge",
        "version": __version__,
        "command": ["subsetforge", *argv],
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        **fields,
    }
    with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _size(args, index, method):
    if args.count is not None:
        return resolve_size(index, args.count, method)
    return resolve_size(index, args.fraction, method)


def cmd_sample(args, argv) -> int:
    index, digest = _load(args.index)
    seed = as_seed(args.seed)
    N = _size(args, index, args.method)
    subset = draw(index, build_inverted_index(index), args.method, N, seed)
    comments = [f"method={args.method} N={N} seed={seed}", f"index_digest={digest}"]
    warnings = []
    for s in subset.shortfalls:
        msg = f"shortfall class={index.classes[s.class_index]} quota={s.quota} available={s.available}"
        log.warning(msg)
        comments.append(msg)
        warnings.append(msg)
    _emit(format_subset(index, subset, comments), args.out)
    _write_manifest(
        args.out, argv, index_digest=digest, seed=seed, method=args.method, N=N,
        entries=subset.N, warnings=warnings,
    )
    return EXIT_OK


def _stats_csv(record: dict, classes) -> str:
    header = ["N", "n", "l1", "n_norm_min", "n_norm_avg"]
    row = [record[h] for h in header]
    for key in ("n_k", "p_subset", "n_norm"):
        header += [f"{key}.{c}" for c in classes]
        row += [record[key][c] for c in classes]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def cmd_stats(args, argv) -> int:
    index, digest = _load(args.index)
    with open(args.subset, encoding="utf-8") as fh:
        subset_text = fh.read()
    subset = subset_from_ids(index, parse_subset_ids(subset_text))
    stats = subset_stats(index, dataset_frequencies(index), subset)
    record = stats.to_record(index.classes)
    if args.format == "json":
        text = json.dumps(dict(record, classes=list(index.classes)), indent=2) + "\n"
    else:
        text = _stats_csv(record, index.classes)
    _emit(text, args.out)
    _write_manifest(
        args.out, argv, index_digest=digest,
        subset_digest=digest64(subset_text.encode("utf-8")), seed=None,
    )
    return EXIT_OK


def cmd_montecarlo(args, argv) -> int:
    index, digest = _load(args.index)
    seed = as_seed(args.seed)
    methods = args.method or list(METHODS)
    if args.count:
        sizes = list(args.count)
    else:
        sizes = list(args.fraction or DEFAULT_FRACTIONS)
    workers = args.workers or os.cpu_count() or 1

    def progress(cell):
        log.info("%s N=%d done (%d trials)", cell.method, cell.N, cell.trials)

    report = simulate(
        index, methods, sizes, args.trials, seed, workers=workers, progress=progress
    )
    if args.format == "json":
        text = json.dumps({"master_seed": seed, "rows": report.rows()}, indent=2) + "\n"
    else:
        text = report.to_csv()
    _emit(text, args.out)
    shortfalls = {
        f"{c.method}@{c.N}": c.shortfall_trials for c in report.cells if c.shortfall_trials
    }
    for cell, n in shortfalls.items():
        log.warning("%s: %d trials hit a class shortfall", cell, n)
    _write_manifest(
        args.out, argv, index_digest=digest, seed=seed, trials=args.trials,
        shortfall_trials=shortfalls,
    )
    return EXIT_OK


def cmd_bench(args, argv) -> int:
    index, digest = _load(args.index)
    seed = as_seed(args.seed)
    inverted = build_inverted_index(index)
    frequencies = dataset_frequencies(index)
    rows = []
    for method in args.method or list(METHODS):
        N = _size(args, index, method)
        r = bench_sampler(
            index, method, N, args.runs, seed=seed, inverted=inverted, frequencies=frequencies
        )
        rows.append(r)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "N", "runs", "mean_ms", "min_ms", "max_ms", "distinct_outputs"])
        for r in rows:
            writer.writerow([r.method, r.N, r.runs, r.mean * 1e3, r.min * 1e3, r.max * 1e3, r.distinct_outputs])
        text = buf.getvalue()
        print(f"note: {BENCH_NOTE}", file=sys.stderr)
    else:
        lines = [f"{'method':<10} {'N':>8} {'runs':>6} {'mean_ms':>10} {'min_ms':>10} {'max_ms':>10}"]
        for r in rows:
            lines.append(
                f"{r.method:<10} {r.N:>8d} {r.runs:>6d} {r.mean * 1e3:>10.4f} "
                f"{r.min * 1e3:>10.4f} {r.max * 1e3:>10.4f}"
            )
        lines.append(f"# {BENCH_NOTE}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    _write_manifest(args.out, argv, index_digest=digest, seed=seed, runs=args.runs)
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    seed = as_seed(args.seed)
    index = generate_synthetic(
        args.classes, args.samples, args.tail_exponent, args.mean_objects, seed
    )
    if args.out is None or args.out == "-":
        sys.stdout.write(dump_index(index))
    else:
        write_index(index, args.out)
    _write_manifest(args.out, argv, seed=seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subsetforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, index=True):
        if index:
            p.add_argument("--index", required=True, help=".clsidx annotation index")
        p.add_argument("--out", help="output path (default: stdout)")

    def seed_opt(p):
        p.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV} or 0)")

    def size_opts(p, default_fraction):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--fraction", type=_fraction, default=default_fraction, help="subset size as a fraction of D")
        g.add_argument("--count", type=_positive_int, help="absolute subset size N")

    p = sub.add_parser("sample", help="select a subset and write a .subset file")
    common(p)
    p.add_argument("--method", type=_method, required=True, help="random | per-class | monspec")
    size_opts(p, 0.2)
    seed_opt(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("stats", aliases=["analyze"], help="quality metrics of a .subset file")
    common(p)
    p.add_argument("--subset", required=True, help=".subset file")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("montecarlo", aliases=["simulate"], help="Monte-Carlo box-plot report")
    common(p)
    p.add_argument("--method", type=_method, action="append", help="repeatable; default: all three")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fraction", type=_fraction, action="append", help="repeatable; default: 0.05 0.1 0.2 0.4 0.8")
    g.add_argument("--count", type=_positive_int, action="append", help="repeatable absolute sizes")
    p.add_argument("--trials", type=_positive_int, default=10**6)
    p.add_argument("--workers", type=_positive_int, default=None, help="default: all CPUs")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    seed_opt(p)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("bench", aliases=["benchmark"], help="time single sampler draws")
    common(p)
    p.add_argument("--method", type=_method, action="append", help="repeatable; default: all three")
    size_opts(p, 0.2)
    p.add_argument("--runs", type=_positive_int, default=1000)
    p.add_argument("--format", choices=("table", "csv"), default="table")
    seed_opt(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", aliases=["synthesize"], help="write a synthetic long-tailed index")
    common(p, index=False)
    p.add_argument("--classes", type=_positive_int, default=10)
    p.add_argument("--samples", type=_positive_int, default=28310)
    p.add_argument("--tail-exponent", type=float, default=1.5)
    p.add_argument("--mean-objects", type=float, default=35.0)
    seed_opt(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        return args.func(args, argv)
    except UsageError as exc:
        print(f"subsetforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"subsetforge: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"subsetforge: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
