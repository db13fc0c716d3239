"""Monte Carlo plumbing: estimates with intervals, seeding, worker mapping.

Conventions used package-wide:

* proportions get Wilson score intervals (default level 99%, because the
  verification suites run many comparisons at once);
* means of bounded replicate values get t intervals;
* every replicate derives its random stream from (master seed, replicate
  index), so a result never depends on how replicates were chunked over
  workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
from scipy import stats

DEFAULT_LEVEL = 0.99


@dataclass(frozen=True)
class EstimateWithCI:
    """A Monte Carlo estimate bundled with its uncertainty."""

    value: float
    stderr: float
    ci_lo: float
    ci_hi: float
    n: int
    level: float = DEFAULT_LEVEL
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")

    def overlaps(self, other: "EstimateWithCI") -> bool:
        return not (self.ci_hi < other.ci_lo or other.ci_hi < self.ci_lo)

    def combined_sigma_distance(self, other: "EstimateWithCI") -> float:
        """|Δ| in units of the combined standard error (0/0 counts as 0)."""
        s = float(np.hypot(self.stderr, other.stderr))
        diff = abs(self.value - other.value)
        if s == 0.0:
            return 0.0 if diff == 0.0 else float("inf")
        return diff / s

    def as_row(self) -> dict:
        return {
            "estimate": self.value,
            "stderr": self.stderr,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "n": self.n,
        }


def wilson_interval(k: int, n: int, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("k must be in [0, n]")
    z = stats.norm.ppf(0.5 + level / 2.0)
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def proportion_estimate(k: int, n: int, level: float = DEFAULT_LEVEL, **meta) -> EstimateWithCI:
    lo, hi = wilson_interval(k, n, level)
    phat = k / n
    se = float(np.sqrt(max(phat * (1 - phat), 1e-300) / n)) if n else 0.0
    return EstimateWithCI(phat, se, lo, hi, n, level, meta)


def mean_estimate(values: np.ndarray, level: float = DEFAULT_LEVEL, **meta) -> EstimateWithCI:
    """Mean with a t interval from the replicate sample."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        raise ValueError("no replicates")
    m = float(values.mean())
    if n == 1:
        return EstimateWithCI(m, 0.0, m, m, 1, level, meta)
    se = float(values.std(ddof=1) / np.sqrt(n))
    tq = stats.t.ppf(0.5 + level / 2.0, df=n - 1)
    return EstimateWithCI(m, se, m - tq * se, m + tq * se, n, level, meta)


def mean_estimate_from_sums(s: float, ss: float, n: int,
                            level: float = DEFAULT_LEVEL, **meta) -> EstimateWithCI:
    """Mean/t-CI from (sum, sum of squares, count) — the commutative reduction."""
    if n <= 0:
        raise ValueError("n must be positive")
    m = s / n
    if n == 1:
        return EstimateWithCI(float(m), 0.0, float(m), float(m), 1, level, meta)
    var = max(ss / n - m * m, 0.0) * n / (n - 1)
    se = float(np.sqrt(var / n))
    tq = stats.t.ppf(0.5 + level / 2.0, df=n - 1)
    return EstimateWithCI(float(m), se, float(m - tq * se), float(m + tq * se),
                          n, level, meta)


def replicate_seeds(master_seed: int, n: int, *, stream: int = 0) -> np.ndarray:
    """Per-replicate 32-bit seeds derived from (master seed, stream).

    Replicate i always receives seeds[i] regardless of worker layout; distinct
    `stream` values give independent seed tables for different consumers of
    the same master seed.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream),))
    out = ss.generate_state(int(n), dtype=np.uint32)
    # numba's np.random.seed rejects 0 on some paths; keep seeds strictly positive
    out[out == 0] = 1
    return out


def generator_for(master_seed: int, *, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_ranges(n: int, chunks: int) -> list[tuple[int, int]]:
    """Split [0, n) into at most `chunks` contiguous ranges."""
    chunks = max(1, min(chunks, n)) if n else 1
    edges = np.linspace(0, n, chunks + 1, dtype=np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def parallel_map(fn, args_list, workers: int = 1):
    """Map fn over args tuples, optionally in a process pool.

    Results are returned in input order.  Because all randomness is
    replicate-indexed, the output is identical for every `workers` value;
    the pool only changes throughput.
    """
    if workers <= 1 or len(args_list) <= 1:
        return [fn(*args) for args in args_list]
    ctx = get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.starmap(fn, args_list)
