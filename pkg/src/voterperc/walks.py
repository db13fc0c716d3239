"""Spread-out random walks and pairwise meeting probabilities.

A walker at x jumps at rate 1 to a site chosen uniformly from the punctured
l1 ball of range R around x.  The central quantity is

    meet_probability(z) = P(two independent walkers started z apart ever
                           share a site),

estimated two independent ways: explicit two-walker Monte Carlo per pair
(`estimate_meet_probability`), and visit-count tables of the pair-separation walk
(`meet_probability_table`), which give the whole box at once and serve as
the cross-check route.  Decay envelopes derived from the tables
(`meeting_upper_envelope`) feed the stopping rule of the multi-walker engine.

Infinite-horizon probabilities are approximated by stopping a pair once its
ℓ∞ separation exceeds `r_esc` (or a step cap); the neglected re-meeting mass
is O(r_esc^(2-d)), about 1e-3 at the defaults, and always biases estimates
*down*.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, lattice, mc


@dataclass(frozen=True)
class TruncationPolicy:
    """When to give up on a pair: escape radius (ℓ∞) and jump-count cap."""
    r_esc: int = 300
    step_cap: int = 1_000_000

    def __post_init__(self):
        if self.r_esc < 1 or self.step_cap < 1:
            raise ValueError("truncation thresholds must be positive")

    @classmethod
    def for_residual(cls, eps, d=3):
        """Escape radius sized so the neglected re-meeting mass is ~eps.

        The residual scales like c*r^(2-d); c is below 0.35 for every
        (d, R) here (it is largest for d=3, R=1).
        """
        if not 0 < eps < 1:
            raise ValueError("residual target must lie in (0, 1)")
        r = int(np.ceil((0.35 / eps) ** (1.0 / (d - 2))))
        return cls(r_esc=min(max(r, 50), 5000))


DEFAULT_TRUNCATION = TruncationPolicy()
# Residual meeting mass after escaping to distance r decays like r^(2-d);
# with the default r_esc this is about 1e-3 of the value scale.
EPS_TRUNC = 1e-3


@dataclass(frozen=True)
class MeetEstimate:
    """Monte-Carlo estimate of a pair meeting probability."""
    d: int
    R: int
    z: tuple
    est: mc.EstimateWithCI
    policy: TruncationPolicy
    mean_steps: float

    @property
    def value(self):
        return self.est.value


@dataclass
class WalkEvent:
    t: float
    label: object
    old_pos: tuple
    new_pos: tuple


@dataclass
class WalkSystem:
    """A small collection of labeled walkers with an exponential event clock.

    This is the reference implementation used by tests and by the run-log
    replayer; large systems go through the compiled engine instead.
    """
    d: int
    R: int
    seed: int = 0
    t: float = 0.0
    positions: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def __post_init__(self):
        self._jumps = lattice.jump_offsets(self.R, self.d)
        self._rng = mc.generator_for(self.seed)

    def add_walker(self, label, pos):
        pos = lattice.as_point(pos, self.d)
        if label in self.positions:
            raise ValueError(f"duplicate walker label {label!r}")
        self.positions[label] = pos

    def remove_walker(self, label):
        del self.positions[label]

    def step_walker(self, label):
        """Apply one uniform jump to one walker (no clock movement)."""
        old = self.positions[label]
        j = self._rng.integers(0, self._jumps.shape[0])
        new = tuple(int(c + o) for c, o in zip(old, self._jumps[j]))
        self.positions[label] = new
        return old, new

    def advance_to_next_event(self):
        """Exponential waiting time at total rate = #walkers, then one jump."""
        n = len(self.positions)
        if n == 0:
            raise ValueError("no walkers to advance")
        self.t += self._rng.exponential(1.0 / n)
        labels = list(self.positions)
        label = labels[self._rng.integers(0, n)]
        old, new = self.step_walker(label)
        ev = WalkEvent(self.t, label, old, new)
        self.events.append(ev)
        return ev

    def colocated_pairs(self):
        """Labels currently sharing a site, as sorted pairs."""
        by_pos = {}
        for lab, pos in self.positions.items():
            by_pos.setdefault(pos, []).append(lab)
        out = []
        for labs in by_pos.values():
            labs = sorted(labs)
            for i in range(len(labs)):
                for j in range(i + 1, len(labs)):
                    out.append((labs[i], labs[j]))
        return sorted(out)


def estimate_meet_probability(d, R, x, y, n=100_000, seed=0, policy=None, level=mc.DEFAULT_LEVEL):
    """P(walkers from x and y ever meet), by explicit two-walker replication.

    Both walkers are simulated (one of the two jumps per event, chosen
    uniformly); no reduction to a single relative walk is used here, so this
    route stays independent of the visit-table route.
    """
    x = lattice.as_point(x, d)
    y = lattice.as_point(y, d)
    if x == y:
        raise ValueError("meeting probability is trivially 1 for x == y; "
                         "pass two distinct starting points")
    if policy is None:
        policy = DEFAULT_TRUNCATION
    z0 = np.array([yi - xi for xi, yi in zip(x, y)], dtype=np.int64)
    jumps = lattice.jump_offsets(R, d)
    seeds = mc.replicate_seeds(seed, n)
    meets, steps = _kernels.pair_meet_batch(
        z0, jumps, R, policy.r_esc, policy.step_cap, seeds)
    est = mc.proportion_estimate(meets, n, level=level, d=d, R=R,
                                 z=tuple(int(v) for v in z0))
    return MeetEstimate(d=d, R=R, z=tuple(int(v) for v in z0), est=est,
                        policy=policy, mean_steps=steps / n)


@dataclass(frozen=True)
class MeetTable:
    """Meeting probabilities for every separation in a box, with stderrs."""
    d: int
    R: int
    box_r: int
    n: int
    ratio: np.ndarray   # flat over lattice.box_points(0, box_r) order
    stderr: np.ndarray

    def lookup(self, z):
        z = lattice.as_point(z, self.d)
        if lattice.linf_norm(z) > self.box_r:
            raise KeyError(f"{z} outside tabulated box (radius {self.box_r})")
        side = 2 * self.box_r + 1
        idx = 0
        for c in z:
            idx = idx * side + (c + self.box_r)
        return float(self.ratio[idx]), float(self.stderr[idx])


def meet_probability_table(d, R, box_r=10, n=50_000, seed=101, policy=None):
    """Tabulate meeting probabilities via visit counts of the separation walk.

    The expected number of visits to z by the separation process started at 0
    factors as (probability of ever reaching z) * (expected visits to the
    start), so the ratio visits(z)/visits(0) estimates the meeting
    probability for separation z.  Standard errors come from the delta method
    using per-replicate second moments and the cross moment with visits(0).
    """
    if policy is None:
        policy = TruncationPolicy(r_esc=max(100, 4 * box_r), step_cap=300_000)
    jumps = lattice.jump_offsets(R, d)
    seeds = mc.replicate_seeds(seed, n, stream=7)
    sum_v, sum_vv, sum_cross = _kernels.pair_visit_tables(
        jumps, R, policy.r_esc, policy.step_cap, seeds, box_r)
    m0 = sum_v[(sum_v.shape[0] - 1) // 2] / n
    mz = sum_v / n
    var_z = sum_vv / n - mz ** 2
    var_0 = sum_vv[(sum_v.shape[0] - 1) // 2] / n - m0 ** 2
    cov = sum_cross / n - mz * m0
    ratio = mz / m0
    var_ratio = (var_z / m0 ** 2 + (mz ** 2) * var_0 / m0 ** 4
                 - 2.0 * mz * cov / m0 ** 3) / n
    var_ratio = np.maximum(var_ratio, 0.0)
    return MeetTable(d=d, R=R, box_r=box_r, n=n,
                     ratio=ratio, stderr=np.sqrt(var_ratio))


def meeting_upper_envelope(d, R, box_r=10, n=50_000, seed=101, safety=1.05,
                           n_sigma=3.0):
    """Per-radius upper envelope q(0..box_r) of the meeting probability.

    q[r] bounds (with high confidence) the meeting probability of any pair at
    ℓ∞ distance r; beyond box_r extend with q[r] ~ q[box_r]*(box_r/r)^(d-2).
    Used by stopping rules, which need the bound one-sided from above.
    """
    table = meet_probability_table(d, R, box_r=box_r, n=n, seed=seed)
    pts = lattice.box_points((0,) * d, box_r)
    hi = table.ratio + n_sigma * table.stderr
    q = np.zeros(box_r + 1, dtype=np.float64)
    q[0] = 1.0
    for p, v in zip(pts, hi):
        r = lattice.linf_norm(p)
        if r >= 1 and v > q[r]:
            q[r] = v
    # radius buckets must be monotone for the tail extension to make sense
    for r in range(box_r - 1, 0, -1):
        if q[r] < q[r + 1]:
            q[r] = q[r + 1]
    q[1:] = np.minimum(1.0, safety * q[1:])
    return q


_ENVELOPE_CACHE = {}


def _envelope_cache_dir():
    root = os.environ.get("VOTERPERC_CACHE")
    if root is None:
        root = os.path.join(os.path.expanduser("~"), ".cache", "voterperc")
    return root


def cached_envelope(d, R, box_r=10):
    """Meeting-probability envelope, memoized in-process and on disk.

    Building the envelope costs ~50k pair-walk replicates, so the array is
    also persisted under $VOTERPERC_CACHE (default ~/.cache/voterperc).  The
    construction is fully deterministic given (d, R, box_r), which makes the
    disk copy safe to reuse; bump the version tag in the filename whenever
    the construction changes.
    """
    key = (d, R, box_r)
    if key in _ENVELOPE_CACHE:
        return _ENVELOPE_CACHE[key]
    cache_dir = _envelope_cache_dir()
    fname = os.path.join(cache_dir, f"envelope_v1_d{d}_R{R}_b{box_r}.npy")
    q = None
    try:
        q = np.load(fname)
    except (OSError, ValueError):
        pass
    if q is None or q.shape != (box_r + 1,):
        q = meeting_upper_envelope(d, R, box_r=box_r)
        try:
            os.makedirs(cache_dir, exist_ok=True)
            tmp = f"{fname}.{os.getpid()}.tmp.npy"
            np.save(tmp, q)
            os.replace(tmp, fname)
        except OSError:
            pass
    _ENVELOPE_CACHE[key] = q
    return q


def estimate_decay_constant(d, R, separations, n=50_000, seed=0, policy=None,
                level=mc.DEFAULT_LEVEL):
    """Decay-constant estimate: max over pairs of h(z) * |z|^(d-2).

    The meeting probability decays like |z|^(2-d) with an R-dependent
    constant; this returns the empirical constant over the given separations
    as an EstimateWithCI (max of per-pair scaled bounds end to end, which is
    conservative in both directions).
    """
    best_val = -np.inf
    best_lo = -np.inf
    best_hi = -np.inf
    rows = []
    for k, z in enumerate(separations):
        z = lattice.as_point(z, d)
        r = lattice.linf_norm(z)
        if r == 0:
            raise ValueError("separation 0 carries no decay information")
        w = float(r ** (d - 2))
        e = estimate_meet_probability(d, R, (0,) * d, z, n=n, seed=seed + 1000 * (k + 1),
                       policy=policy, level=level)
        rows.append((z, e))
        best_val = max(best_val, e.est.value * w)
        best_lo = max(best_lo, e.est.ci_lo * w)
        best_hi = max(best_hi, e.est.ci_hi * w)
    est = mc.EstimateWithCI(value=best_val, stderr=float("nan"),
                            ci_lo=best_lo, ci_hi=best_hi,
                            n=sum(e.est.n for _, e in rows), level=level,
                            meta={"d": d, "R": R,
                                  "separations": [tuple(z) for z, _ in rows]})
    return est, rows


def calibrate_remeet(d, R, radii, n=20_000, seed=5, policy=None):
    """Meeting probability at separations r*e1, as CSV-ready rows.

    Returns (header, rows) with columns d,R,r,remeet_prob_estimate,n.
    """
    header = ["d", "R", "r", "remeet_prob_estimate", "stderr", "ci_lo",
              "ci_hi", "n"]
    rows = []
    e1 = lambda r: (r,) + (0,) * (d - 1)
    for r in radii:
        e = estimate_meet_probability(d, R, (0,) * d, e1(r), n=n, seed=seed + r,
                       policy=policy)
        rows.append([d, R, r, e.est.value, e.est.stderr, e.est.ci_lo,
                     e.est.ci_hi, n])
    return header, rows
