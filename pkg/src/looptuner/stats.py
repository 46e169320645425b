"""Statistics over pools of run records.

Implements the evaluation metrics: median@T (per-instance median best-so-far
speedup at iteration T), BestOf K@T (median of the max-of-K-draws
distribution, exact via order statistics with a seeded sampling estimator
for cross-checking), geometric-mean aggregation across instances, bootstrap
confidence intervals (resample each pool's runs with replacement, per-pool
median, geomean across pools, 2.5th/97.5th percentiles of 1000 replicates),
viability breakdowns and cumulative token curves.

Even-count medians use midpoint averaging by default; pass
convention="lower" for the lower-middle element. Best-of-K draws are with
replacement. Early-terminated runs pad their best-so-far series with the
final value so every T has a value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .records import RunRecord, load_run_record

ILLEGAL_LIKE = ("illegal", "solver_failure", "compiler_crash")


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    ci_low: float
    ci_high: float

    def __post_init__(self) -> None:
        if not (self.ci_low <= self.point <= self.ci_high):
            raise ValueError(
                f"confidence interval [{self.ci_low}, {self.ci_high}] does not "
                f"bracket the point estimate {self.point}"
            )


@dataclass
class Pool:
    """All runs of one benchmark instance: per-run best-so-far speedup series
    (index T=0..T_max), per-iteration categories, cumulative token counts."""

    instance: str
    series: list[list[float]]
    categories: list[list[str]] = field(default_factory=list)
    tokens: list[list[int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.series:
            raise ValueError(f"pool {self.instance!r} has no runs")
        length = max(len(s) for s in self.series)
        for s in self.series:
            if not s:
                raise ValueError("empty best-so-far series")
            if any(v <= 0 for v in s):
                raise ValueError("speedups must be positive")
            while len(s) < length:
                s.append(s[-1])  # early-terminated runs hold their final best

    @property
    def t_max(self) -> int:
        return len(self.series[0]) - 1

    def values_at(self, t: int) -> list[float]:
        if not (0 <= t <= self.t_max):
            raise IndexError(f"T={t} outside 0..{self.t_max}")
        return [s[t] for s in self.series]

    @classmethod
    def from_records(
        cls, instance: str, records: Sequence[RunRecord], t_max: int | None = None
    ) -> "Pool":
        series, cats, toks = [], [], []
        for rec in records:
            s = rec.best_series()
            c = rec.categories()
            tk = _cumulative_tokens_by_t(rec)
            if t_max is not None:
                s = (s + [s[-1]] * t_max)[: t_max + 1]
                tk = (tk + [tk[-1]] * t_max)[: t_max + 1]
            series.append(s)
            cats.append(c)
            toks.append(tk)
        return cls(instance, series, cats, toks)


def _cumulative_tokens_by_t(rec: RunRecord) -> list[int]:
    """Cumulative total tokens at the exchange where each T was reached."""
    out = [0]
    for ex in rec.exchanges:
        if ex.novel:
            out.append(ex.cum_input_tokens + ex.cum_output_tokens)
    return out


# ---------------------------------------------------------------------------
# medians and best-of-K
# ---------------------------------------------------------------------------


def _median(values: Sequence[float], convention: str = "midpoint") -> float:
    if not values:
        raise ValueError("median of an empty pool")
    s = sorted(values)
    n = len(s)
    if n % 2 == 1:
        return s[n // 2]
    if convention == "lower":
        return s[n // 2 - 1]
    if convention == "midpoint":
        return (s[n // 2 - 1] + s[n // 2]) / 2.0
    raise ValueError(f"unknown median convention {convention!r}")


def median_at(pool: Pool, t: int, convention: str = "midpoint") -> float:
    """Median best-so-far speedup across the pool's runs at iteration T."""
    return _median(pool.values_at(t), convention)


def _weighted_rank_value(s: list[float], k: int, rank: int) -> float:
    """Value at 1-based rank `rank` of the max-of-k distribution over the
    n^k equally likely ordered draws from s (sorted ascending)."""
    cum = 0
    for i, v in enumerate(s, start=1):
        cum = i**k
        if cum >= rank:
            return v
    raise AssertionError("rank exceeds distribution size")


def best_of_k_exact(values: Sequence[float], k: int, convention: str = "midpoint") -> float:
    """Median of max-of-k draws (with replacement), by order statistics:
    position i of the sorted pool carries weight i^k - (i-1)^k out of n^k."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if not values:
        raise ValueError("best-of-K over an empty pool")
    s = sorted(values)
    total = len(s) ** k
    if total % 2 == 1:
        return _weighted_rank_value(s, k, (total + 1) // 2)
    lo = _weighted_rank_value(s, k, total // 2)
    if convention == "lower":
        return lo
    hi = _weighted_rank_value(s, k, total // 2 + 1)
    return (lo + hi) / 2.0


def best_of_k_sampled(
    values: Sequence[float],
    k: int,
    convention: str = "midpoint",
    samples: int = 10000,
    seed: int = 0,
) -> float:
    """Sampling estimator for cross-checking the exact order-statistic path."""
    rng = np.random.default_rng(seed)
    arr = np.asarray(values, dtype=float)
    draws = arr[rng.integers(0, len(arr), size=(samples, k))]
    maxes = sorted(draws.max(axis=1).tolist())
    n = len(maxes)
    if n % 2 == 1:
        return maxes[n // 2]
    if convention == "lower":
        return maxes[n // 2 - 1]
    return (maxes[n // 2 - 1] + maxes[n // 2]) / 2.0


def best_of_k_at(
    pool: Pool,
    k: int,
    t: int,
    convention: str = "midpoint",
    method: str = "exact",
    samples: int = 10000,
    seed: int = 0,
) -> float:
    """Typical best speedup of K independent runs at iteration T."""
    values = pool.values_at(t)
    if method == "exact":
        return best_of_k_exact(values, k, convention)
    if method == "sample":
        return best_of_k_sampled(values, k, convention, samples, seed)
    raise ValueError(f"unknown method {method!r}")


def geomean(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        raise ValueError("geometric mean of an empty sequence")
    if any(v <= 0 for v in vals):
        raise ValueError("geometric mean requires positive values")
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------


def bootstrap_ci(
    pools: Sequence[Pool],
    t: int,
    iterations: int = 1000,
    seed: int = 0,
    convention: str = "midpoint",
) -> EstimateWithCI:
    """95% bootstrap CI for the geomean-of-medians at iteration T.

    Per bootstrap iteration, each pool's runs are resampled with replacement
    (same size), the per-pool median taken, and the geometric mean computed
    across pools; the interval is the 2.5th/97.5th percentiles of the
    replicate distribution. Deterministic for a fixed seed: one generator,
    consumed pool by pool in order.
    """
    if not pools:
        raise ValueError("bootstrap over an empty pool list")
    rng = np.random.default_rng(seed)
    point = geomean(_median(p.values_at(t), convention) for p in pools)
    replicate_medians = np.empty((len(pools), iterations), dtype=float)
    for pi, pool in enumerate(pools):
        vals = np.asarray(pool.values_at(t), dtype=float)
        n = len(vals)
        idx = rng.integers(0, n, size=(iterations, n))
        draws = np.sort(vals[idx], axis=1)
        if n % 2 == 1:
            med = draws[:, n // 2]
        elif convention == "lower":
            med = draws[:, n // 2 - 1]
        else:
            med = (draws[:, n // 2 - 1] + draws[:, n // 2]) / 2.0
        replicate_medians[pi] = med
    geos = np.exp(np.mean(np.log(replicate_medians), axis=0))
    lo, hi = np.percentile(geos, [2.5, 97.5])
    return EstimateWithCI(point, float(lo), float(hi))


# ---------------------------------------------------------------------------
# viability and token accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ViabilityBreakdown:
    runnable_pct: float
    invalid_pct: float
    illegal_like_pct: float
    sub_counts: dict
    total: int


def viability_breakdown(pools: Sequence[Pool], t: int) -> ViabilityBreakdown:
    """Shares of runnable / invalid / illegal-like proposals among all novel
    proposals with T' <= T across all runs, with sub-counts for the
    illegal-like bucket."""
    counts = {"success": 0, "invalid": 0}
    sub = {k: 0 for k in ILLEGAL_LIKE}
    total = 0
    for pool in pools:
        for cats in pool.categories:
            for c in cats[:t]:
                total += 1
                if c == "success":
                    counts["success"] += 1
                elif c == "invalid":
                    counts["invalid"] += 1
                elif c in sub:
                    sub[c] += 1
                else:
                    raise ValueError(f"unknown category {c!r}")
    if total == 0:
        return ViabilityBreakdown(0.0, 0.0, 0.0, sub, 0)
    return ViabilityBreakdown(
        100.0 * counts["success"] / total,
        100.0 * counts["invalid"] / total,
        100.0 * sum(sub.values()) / total,
        sub,
        total,
    )


def token_curve(pool: Pool) -> list[float]:
    """Average cumulative total tokens as a function of T across runs."""
    if not pool.tokens:
        raise ValueError("pool carries no token data")
    length = max(len(t) for t in pool.tokens)
    padded = [t + [t[-1]] * (length - len(t)) for t in pool.tokens]
    return [sum(col) / len(col) for col in zip(*padded)]


# ---------------------------------------------------------------------------
# record loading and report writing
# ---------------------------------------------------------------------------


def load_pools(
    records_dir: str | Path,
    include_incomplete: bool = False,
    t_max: int | None = None,
) -> list[Pool]:
    """Group the run records in a directory into per-kernel pools."""
    groups: dict[str, list[RunRecord]] = {}
    skipped = 0
    for path in sorted(Path(records_dir).glob("*.jsonl")):
        rec = load_run_record(path)
        if rec.incomplete and not include_incomplete:
            skipped += 1
            continue
        groups.setdefault(rec.kernel_name, []).append(rec)
    if not groups:
        raise ValueError(
            f"no usable run records in {records_dir}"
            + (f" ({skipped} incomplete records skipped)" if skipped else "")
        )
    return [
        Pool.from_records(name, recs, t_max=t_max)
        for name, recs in sorted(groups.items())
    ]


def write_median_report(
    pools: Sequence[Pool], ts: Sequence[int], out_csv: Path, convention: str = "midpoint"
) -> str:
    """Per-instance median@T table plus the geomean row. Returns the text view."""
    rows = []
    for pool in pools:
        rows.append(
            [pool.instance] + [f"{median_at(pool, t, convention):.4f}" for t in ts]
        )
    geo = [
        f"{geomean(median_at(p, t, convention) for p in pools):.4f}" for t in ts
    ]
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["instance"] + [f"median@{t}" for t in ts])
        w.writerows(rows)
        w.writerow(["geomean"] + geo)
    header = ["instance"] + [f"median@{t}" for t in ts]
    lines = ["\t".join(header)]
    lines += ["\t".join(r) for r in rows]
    lines.append("\t".join(["geomean"] + geo))
    return "\n".join(lines) + "\n"


def write_bestof_grid(
    pools: Sequence[Pool],
    ks: Sequence[int],
    ts: Sequence[int],
    out_csv: Path,
    convention: str = "midpoint",
) -> str:
    """Geomean BestOf K@T grid (rows K, columns T): the K/T scaling data."""
    grid = []
    for k in ks:
        row = [
            geomean(best_of_k_at(p, k, t, convention) for p in pools) for t in ts
        ]
        grid.append(row)
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["K\\T"] + [str(t) for t in ts])
        for k, row in zip(ks, grid):
            w.writerow([str(k)] + [f"{v:.4f}" for v in row])
    lines = ["\t".join(["K\\T"] + [str(t) for t in ts])]
    for k, row in zip(ks, grid):
        lines.append("\t".join([str(k)] + [f"{v:.4f}" for v in row]))
    return "\n".join(lines) + "\n"


def write_viability_report(pools: Sequence[Pool], t: int, out_csv: Path) -> str:
    vb = viability_breakdown(pools, t)
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bucket", "percent", "count"])
        w.writerow(["runnable", f"{vb.runnable_pct:.2f}", ""])
        w.writerow(["invalid", f"{vb.invalid_pct:.2f}", ""])
        w.writerow(["illegal_like", f"{vb.illegal_like_pct:.2f}", ""])
        for name, count in vb.sub_counts.items():
            w.writerow([f"  {name}", "", str(count)])
        w.writerow(["total_proposals", "", str(vb.total)])
    return (
        f"runnable {vb.runnable_pct:.2f}%  invalid {vb.invalid_pct:.2f}%  "
        f"illegal-like {vb.illegal_like_pct:.2f}% {vb.sub_counts} "
        f"(n={vb.total})\n"
    )


def write_token_report(pools: Sequence[Pool], out_csv: Path) -> str:
    curves = {p.instance: token_curve(p) for p in pools}
    length = max(len(c) for c in curves.values())
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["T"] + list(curves.keys()))
        for t in range(length):
            row = [str(t)]
            for c in curves.values():
                row.append(f"{c[min(t, len(c) - 1)]:.1f}")
            w.writerow(row)
    return f"token curves for {len(curves)} instance(s), T=0..{length - 1}\n"
