"""Acceptance gate. Each test records one PASS/FAIL line, shown in the
terminal summary under "acceptance criteria" (and inline with ``-s``)."""

import csv
import io
import os
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from subsetforge import (
    bench_sampler,
    build_inverted_index,
    dataset_frequencies,
    enumerate_exact,
    generate_synthetic,
    quota_per_class,
    resolve_size,
    run_trials,
    sample_monspec,
    simulate,
    subset_stats,
    write_index,
)
from subsetforge.cli import main

from conftest import CAR, PED, S3, S4

FRACTIONS = (0.05, 0.1, 0.2, 0.4, 0.8)
T = 100_000
SEED = 20240601


def _record(log, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} [{detail}]"
    log.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def synth():
    index = generate_synthetic(10, 28310, 1.5, 35.0, seed=1)
    return index, dataset_frequencies(index), build_inverted_index(index)


@pytest.fixture(scope="session")
def grid(synth):
    index, _, _ = synth
    t0 = time.perf_counter()
    report = simulate(index, sizes=FRACTIONS, trials=T, master_seed=SEED, workers=os.cpu_count() or 1)
    return report, time.perf_counter() - t0


def test_criterion_1_fixture_exactness(criteria_log, f1, f1_freq, f1_inv):
    t0 = time.perf_counter()
    quotas = quota_per_class(2, f1_freq)
    subset = sample_monspec(f1, f1_inv, quotas)
    st = subset_stats(f1, f1_freq, subset)
    exact = enumerate_exact(f1, "monspec", 2)
    elapsed = time.perf_counter() - t0
    (triple,) = exact.outcomes
    ok = (
        subset.entries == [(S4, CAR), (S3, PED)]
        and st.n_k.tolist() == [5, 4]
        and abs(st.l1 - 14 / 117) <= 1e-9
        and np.allclose(st.n_norm, [1.25, 1.6], rtol=0, atol=1e-12)
        and abs(st.n_norm_min - 1.25) <= 1e-12
        and abs(st.n_norm_avg - 1.425) <= 1e-12
        and triple == (st.l1, st.n_norm_min, st.n_norm_avg)
        and elapsed < 1.0
    )
    detail = f"entries={subset.entries} n_k={st.n_k.tolist()} l1={st.l1:.12f} n_norm={st.n_norm.tolist()} {elapsed:.3f}s"
    _record(criteria_log, 1, "F1 monspec exactness", ok, detail)


def test_criterion_2_oracle_agreement(criteria_log, f1, f1_freq, f1_inv):
    t0 = time.perf_counter()
    exact = enumerate_exact(f1, "random", 2)
    tm = run_trials(f1, f1_freq, f1_inv, "random", 2, T, SEED, workers=1)
    elapsed = time.perf_counter() - t0
    seen = Counter(zip(tm.l1.tolist(), tm.n_norm_min.tolist(), tm.n_norm_avg.tolist()))
    worst = max(abs(seen.get(o, 0) / T - float(p)) for o, p in exact.outcomes.items())
    mean_gap = abs(float(tm.l1.mean()) - exact.mean("l1"))
    ok = (
        exact.n_draws == 6
        and len(exact.outcomes) == 6
        and all(p == Fraction(1, 6) for p in exact.outcomes.values())
        and abs(exact.mean("l1") - 0.406481) < 5e-7
        and set(seen) == set(exact.outcomes)
        and worst <= 0.01
        and mean_gap <= 0.005
        and elapsed < 30
    )
    detail = f"exact mean L1={exact.mean('l1'):.6f} max freq gap={worst:.4f} mean gap={mean_gap:.5f} {elapsed:.1f}s"
    _record(criteria_log, 2, "enumeration vs Monte Carlo on F1", ok, detail)


@pytest.mark.slow
def test_criterion_3_normalization_identity(criteria_log, grid):
    report, elapsed = grid
    mean = report.cell("random", 0.2).summaries["n_norm_avg"].mean
    ok = abs(mean - 1.0) <= 0.01
    _record(criteria_log, 3, "random mean n_norm_avg = 1", ok, f"f=0.2 T={T} mean={mean:.5f}")


@pytest.mark.slow
def test_criterion_4_min_ordering(criteria_log, grid):
    report, elapsed = grid
    parts, ok = [], elapsed < 30 * 60
    for f in FRACTIONS:
        r, p, m = (report.cell(meth, f).summaries["n_norm_min"].median for meth in ("random", "per_class", "monspec"))
        ok &= r < 1 < p and m > 1
        parts.append(f"f={f}: {r:.3f}/{p:.3f}/{m:.3f}")
    detail = "median n_norm_min random/per_class/monspec " + "; ".join(parts) + f"; grid {elapsed:.0f}s"
    _record(criteria_log, 4, "n_norm_min ordering", ok, detail)


@pytest.mark.slow
def test_criterion_5_avg_and_l1_ordering(criteria_log, grid):
    report, _ = grid
    parts, ok = [], True
    for f in FRACTIONS:
        rnd, pc, ms = (report.cell(m, f).summaries for m in ("random", "per_class", "monspec"))
        avg = (ms["n_norm_avg"].median, pc["n_norm_avg"].q3, rnd["n_norm_avg"].median)
        l1 = (rnd["l1"].median, pc["l1"].median, ms["l1"].median)
        ok &= avg[0] > avg[1] > avg[2] and l1[0] < l1[1] < l1[2]
        parts.append(f"f={f}: avg {avg[0]:.2f}>{avg[1]:.2f}>{avg[2]:.2f} L1 {l1[0]:.4f}<{l1[1]:.4f}<{l1[2]:.4f}")
    _record(criteria_log, 5, "n_norm_avg and L1 ordering", ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_6_exceedance(criteria_log, grid):
    report, _ = grid
    probs = {f: report.cell("random", f).p_n_norm_min_below_1 for f in FRACTIONS if f <= 0.2}
    ok = all(p > 0.95 for p in probs.values())
    detail = " ".join(f"f={f}: {p:.4f}" for f, p in probs.items())
    _record(criteria_log, 6, "random P(n_norm_min < 1) > 0.95", ok, detail)


def _cli(*argv):
    assert main([str(a) for a in argv]) == 0


def _bench_key(text):
    rows = list(csv.DictReader(io.StringIO(text), strict=True))
    return [(r["method"], r["N"], r["runs"], r["distinct_outputs"]) for r in rows]


def test_criterion_7_determinism(criteria_log, tmp_path, capsys):
    t0 = time.perf_counter()
    failures = []

    def twice(name, *argv, key=lambda b: b):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}.{run}"
            _cli(*argv, "--out", out)
            outs.append(key(out.read_bytes()))
        if outs[0] != outs[1]:
            failures.append(name)
        return tmp_path / f"{name}.a"

    idx = twice("synth", "synth", "--classes", 10, "--samples", 3000, "--seed", 7)
    for method in ("random", "per_class", "monspec"):
        sub = twice(f"sample-{method}", "sample", "--index", idx, "--method", method, "--fraction", 0.1, "--seed", 9)
        twice(f"stats-{method}", "stats", "--index", idx, "--subset", sub)
    twice("montecarlo", "montecarlo", "--index", idx, "--trials", 200, "--seed", 3, "--workers", 2)
    twice("bench", "bench", "--index", idx, "--runs", 20, "--format", "csv",
          key=lambda b: _bench_key(b.decode()))
    capsys.readouterr()

    synth = generate_synthetic(10, 5000, 1.5, 35.0, seed=2)
    freq, inv = dataset_frequencies(synth), build_inverted_index(synth)
    for method in ("random", "per_class"):
        N = resolve_size(synth, 0.1, method)
        mats = [run_trials(synth, freq, inv, method, N, 400, 11, workers=w) for w in (1, 2, 8)]
        if not (mats[0] == mats[1] == mats[2]):
            failures.append(f"workers-{method}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    _record(criteria_log, 7, "determinism", ok, f"mismatches={failures or 'none'} {elapsed:.1f}s")


def test_criterion_8_latency(criteria_log, synth):
    index, freq, inv = synth
    t0 = time.perf_counter()
    res = {
        m: bench_sampler(index, m, resolve_size(index, 0.2, m), 1000, seed=SEED, inverted=inv, frequencies=freq)
        for m in ("random", "per_class", "monspec")
    }
    elapsed = time.perf_counter() - t0
    r, p, m = (res[k].mean for k in ("random", "per_class", "monspec"))
    worst = max(x.max for x in res.values())
    ok = r <= p < m and worst < 0.1 and elapsed < 120
    detail = f"mean ms {r*1e3:.3f}/{p*1e3:.3f}/{m*1e3:.3f} max {worst*1e3:.1f} ms {elapsed:.1f}s"
    _record(criteria_log, 8, "latency ordering random <= per_class < monspec", ok, detail)


def test_criterion_9_throughput(criteria_log, synth):
    index, freq, inv = synth
    N = resolve_size(index, 0.05)
    trials = 20_000
    t0 = time.perf_counter()
    run_trials(index, freq, inv, "random", N, trials, SEED, workers=1)
    rate = trials / (time.perf_counter() - t0)
    _record(criteria_log, 9, "random trials/s per worker >= 1000", rate >= 1000, f"f=0.05 N={N} {rate:.0f} trials/s")
