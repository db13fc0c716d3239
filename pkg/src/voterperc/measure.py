"""Sampling the stationary opinion fields and local event probabilities.

The stationary field with density alpha on a finite window is sampled by
duality: run merging walkers from every window site, then paint each final
block independently Bernoulli(alpha) and give every site its block's colour.
Stopping a run early can only miss future merges, so the sampled law is
within the achieved pair-meeting bound (in total variation) of the exact
one, and one-site marginals are exactly Bernoulli(alpha) under *any*
stopping rule.

A second, independent route simulates the opinion dynamics forward on a
torus from iid initial opinions (`sample_voter_torus`); agreement of the two
routes on small windows is part of the acceptance battery.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, coalescence, io, lattice, mc


@dataclass
class FieldSample:
    """A 0/1 field on a finite window, with provenance.

    Grid layout (origin + dims, row-major values) when the window is a box;
    explicit point tuple otherwise.  values[i] belongs to points()[i].
    """
    d: int
    values: np.ndarray
    origin: tuple = None
    dims: tuple = None
    points_list: tuple = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8).ravel()
        if (self.dims is None) == (self.points_list is None):
            raise ValueError("give exactly one of dims(+origin) or points_list")
        if self.dims is not None:
            self.dims = tuple(int(v) for v in self.dims)
            if self.origin is None:
                self.origin = (0,) * self.d
            self.origin = lattice.as_point(self.origin, self.d)
            if int(np.prod(self.dims)) != self.values.size:
                raise ValueError("dims do not match value count")
        else:
            self.points_list = tuple(lattice.as_point(p, self.d)
                                     for p in self.points_list)
            if len(self.points_list) != self.values.size:
                raise ValueError("points do not match value count")
        self._index = None

    @property
    def is_grid(self):
        return self.dims is not None

    def points(self):
        if self.is_grid:
            ranges = [range(o, o + s) for o, s in zip(self.origin, self.dims)]
            return tuple(itertools.product(*ranges))
        return self.points_list

    def value_at(self, p):
        p = lattice.as_point(p, self.d)
        if self.is_grid:
            idx = 0
            for c, o, s in zip(p, self.origin, self.dims):
                off = c - o
                if not 0 <= off < s:
                    raise KeyError(f"{p} outside window")
                idx = idx * s + off
            return int(self.values[idx])
        if self._index is None:
            self._index = {q: i for i, q in enumerate(self.points_list)}
        try:
            return int(self.values[self._index[p]])
        except KeyError:
            raise KeyError(f"{p} outside window") from None

    def covers(self, pts):
        try:
            for p in pts:
                self.value_at(p)
        except KeyError:
            return False
        return True

    def grid(self):
        if not self.is_grid:
            raise ValueError("not a grid-layout field")
        return self.values.reshape(self.dims)

    def density(self):
        return float(self.values.mean())

    def shifted(self, x):
        """The same field relabeled so that old site p is new site p + x."""
        x = lattice.as_point(x, self.d)
        prov = dict(self.provenance, shifted_by=list(x))
        if self.is_grid:
            new_origin = tuple(o + xi for o, xi in zip(self.origin, x))
            return FieldSample(self.d, self.values.copy(), origin=new_origin,
                               dims=self.dims, provenance=prov)
        pts = tuple(lattice.shift_points(self.points_list, x))
        return FieldSample(self.d, self.values.copy(), points_list=pts,
                           provenance=prov)

    def to_payload(self):
        first, runs = io.rle_encode(self.values.tolist())
        doc = {"kind": "field_sample", "d": self.d,
               "provenance": self.provenance,
               "rle_first": first, "rle_runs": runs}
        if self.is_grid:
            doc["origin"] = list(self.origin)
            doc["dims"] = list(self.dims)
        else:
            doc["points"] = [list(p) for p in self.points_list]
        return doc

    def dump_json(self, path):
        return io.write_json(path, self.to_payload())

    @classmethod
    def from_payload(cls, doc):
        vals = np.array(io.rle_decode(doc["rle_first"], doc["rle_runs"]),
                        dtype=np.uint8)
        if "dims" in doc:
            return cls(doc["d"], vals, origin=tuple(doc["origin"]),
                       dims=tuple(doc["dims"]),
                       provenance=doc.get("provenance", {}))
        return cls(doc["d"], vals,
                   points_list=[tuple(p) for p in doc["points"]],
                   provenance=doc.get("provenance", {}))

    @classmethod
    def load_json(cls, path):
        return cls.from_payload(io.read_json(path))


# ---------------------------------------------------------------------------
# events


class CylinderEvent:
    """A finite-window event: constraints {point: required value}."""

    def __init__(self, constraints):
        self.constraints = {lattice.as_point(p): int(v) % 2
                            for p, v in dict(constraints).items()}
        if not self.constraints:
            raise ValueError("empty cylinder event")

    @property
    def base(self):
        return tuple(sorted(self.constraints))

    def shift(self, x):
        return CylinderEvent({tuple(c + xi for c, xi in zip(p, x)): v
                              for p, v in self.constraints.items()})

    def occurs(self, field):
        return all(field.value_at(p) == v for p, v in self.constraints.items())

    def prob_product(self, alpha):
        """Probability under the iid Bernoulli(alpha) field."""
        p = 1.0
        for v in self.constraints.values():
            p *= alpha if v == 1 else 1.0 - alpha
        return p


class PredicateEvent:
    """An event given by an arbitrary predicate on a finite base window."""

    def __init__(self, base_points, predicate, name="predicate"):
        self.base_points = tuple(lattice.as_point(p) for p in base_points)
        if not self.base_points:
            raise ValueError("empty base window")
        self.predicate = predicate
        self.name = name

    @property
    def base(self):
        return self.base_points

    def shift(self, x):
        x = lattice.as_point(x)
        pred = self.predicate
        shifted_base = lattice.shift_points(self.base_points, x)
        return PredicateEvent(
            shifted_base,
            lambda assign, _x=x, _pred=pred, _bp=self.base_points: _pred(
                {p: assign[tuple(c + xi for c, xi in zip(p, _x))] for p in _bp}),
            name=f"{self.name}+{tuple(x)}")

    def occurs(self, field):
        assign = {p: field.value_at(p) for p in self.base_points}
        return bool(self.predicate(assign))

    def prob_product(self, alpha):
        """Exact probability under iid Bernoulli(alpha), by enumeration."""
        k = len(self.base_points)
        if k > 20:
            raise ValueError("base window too large for exact enumeration")
        total = 0.0
        for bits in itertools.product((0, 1), repeat=k):
            assign = dict(zip(self.base_points, bits))
            if self.predicate(assign):
                ones = sum(bits)
                total += alpha ** ones * (1 - alpha) ** (k - ones)
        return total


def intersect_shifted(event, shifts):
    """The joint event: `event` occurs at every one of the given shifts."""
    shifted = [event.shift(x) for x in shifts]
    base = []
    for ev in shifted:
        base.extend(ev.base)
    if len(set(base)) != len(base):
        raise ValueError("shifted copies overlap; translates must be disjoint")

    def pred(assign, _evs=shifted):
        for ev in _evs:
            sub = {p: assign[p] for p in ev.base}
            if isinstance(ev, CylinderEvent):
                if any(sub[p] != v for p, v in ev.constraints.items()):
                    return False
            else:
                if not ev.predicate(sub):
                    return False
        return True

    return PredicateEvent(base, pred, name="intersection")


# ---------------------------------------------------------------------------
# samplers


def _window_points(window, d=None):
    if isinstance(window, lattice.BoxSpec):
        return window.points(), window
    if isinstance(window, tuple) and len(window) == 2 and np.isscalar(window[1]):
        box = lattice.BoxSpec(lattice.as_point(window[0], d), int(window[1]))
        return box.points(), box
    pts = [lattice.as_point(p, d) for p in window]
    return pts, None


def _paint_blocks(labels, alpha, rng):
    roots, inv = np.unique(labels, return_inverse=True)
    colors = (rng.random(roots.size) < alpha).astype(np.uint8)
    return colors[inv]


def sample_mu(d, R, alpha, window, seed=0, policy=None, qtable=None):
    """One stationary-field sample on the window (dual-walk route)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    pts, box = _window_points(window, d)
    if policy is None:
        policy = coalescence.DEFAULT_STOPPING
    A = np.array(pts, dtype=np.int64)
    walk_seed = int(mc.replicate_seeds(seed, 1, stream=10)[0])
    labels, achieved, reason, t_end = coalescence.run_labels(
        A, R=R, seed32=walk_seed, policy=policy, qtable=qtable)
    rng = mc.generator_for(seed, stream=11)
    vals = _paint_blocks(labels, alpha, rng)
    prov = {"sampler": "stationary_dual", "d": d, "R": R, "alpha": alpha,
            "seed": int(seed), "eps_stop": policy.eps_stop,
            "t_max": policy.t_max, "achieved_qsum": achieved,
            "stop_reason": coalescence.STOP_REASONS[reason], "t_end": t_end}
    if box is not None:
        origin = tuple(c - box.radius for c in box.center)
        side = 2 * box.radius + 1
        return FieldSample(d, vals, origin=origin, dims=(side,) * d,
                           provenance=prov)
    return FieldSample(d, vals, points_list=pts, provenance=prov)


def sample_mu_finite_time(d, R, alpha, window, t, seed=0):
    """Sample the law at finite time t started from iid Bernoulli(alpha).

    Identical to sample_mu except the dual walkers run for exactly time t
    (they may also stop earlier once no further merge can occur).
    """
    policy = coalescence.StoppingPolicy(eps_stop=1e-12, t_max=float(t),
                                        max_events=10 ** 12)
    return sample_mu(d, R, alpha, window, seed=seed, policy=policy)


def sample_bernoulli(d, alpha, window, seed=0):
    """The iid Bernoulli(alpha) reference field on the window."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    pts, box = _window_points(window, d)
    rng = mc.generator_for(seed, stream=12)
    vals = (rng.random(len(pts)) < alpha).astype(np.uint8)
    prov = {"sampler": "bernoulli", "d": d, "alpha": alpha, "seed": int(seed)}
    if box is not None:
        origin = tuple(c - box.radius for c in box.center)
        side = 2 * box.radius + 1
        return FieldSample(d, vals, origin=origin, dims=(side,) * d,
                           provenance=prov)
    return FieldSample(d, vals, points_list=pts, provenance=prov)


def sample_voter_torus(d, R, alpha, side, t, seed=0):
    """Forward dynamics on a side^d torus from iid Bernoulli(alpha) opinions.

    Requires side > 2*(R + ceil(t*R)) so that, on the window used for
    comparisons around the origin, wrap-around effects cannot reach within
    time t (jumps move at most R per event).
    """
    min_side = 2 * (R + int(np.ceil(t * R)))
    if side <= min_side:
        raise ValueError(
            f"torus side {side} too small for horizon t={t}: need > {min_side}")
    rng = mc.generator_for(seed, stream=13)
    state = (rng.random(side ** d) < alpha).astype(np.uint8)
    dims = np.full(d, side, dtype=np.int64)
    jumps = lattice.jump_offsets(R, d)
    kseed = int(mc.replicate_seeds(seed, 1, stream=14)[0])
    state = _kernels.voter_torus_run(state, dims, jumps, float(t), kseed)
    prov = {"sampler": "voter_torus", "d": d, "R": R, "alpha": alpha,
            "seed": int(seed), "t": float(t), "side": side}
    return FieldSample(d, state, origin=(0,) * d, dims=(side,) * d,
                       provenance=prov)


# ---------------------------------------------------------------------------
# replicated estimation


def estimate_event_prob(sampler, event, n=10_000, seed=0,
                        level=mc.DEFAULT_LEVEL, **meta):
    """P(event) under the field law produced by `sampler(seed) -> FieldSample`."""
    hits = 0
    for i, s in enumerate(mc.replicate_seeds(seed, n, stream=20)):
        fld = sampler(int(s) + i)
        if event.occurs(fld):
            hits += 1
    return mc.proportion_estimate(hits, n, level=level, **meta)


def estimate_density(d, R, alpha, window, n=1000, seed=0, policy=None,
                     level=mc.DEFAULT_LEVEL):
    """Mean occupation over the window, replicated; exact value is alpha."""
    pts, _ = _window_points(window, d)
    A = np.array(pts, dtype=np.int64)
    qtable = None
    s = ss = 0.0
    seeds = mc.replicate_seeds(seed, n, stream=21)
    rng = mc.generator_for(seed, stream=22)
    if policy is None:
        policy = coalescence.DEFAULT_STOPPING
    for k in range(n):
        labels, _, _, _ = coalescence.run_labels(A, R=R, seed32=int(seeds[k]),
                                                 policy=policy, qtable=qtable)
        vals = _paint_blocks(labels, alpha, rng)
        m = float(vals.mean())
        s += m
        ss += m * m
    return mc.mean_estimate_from_sums(s, ss, n, level=level, d=d, R=R,
                                      alpha=alpha, window=len(pts))


def estimate_covariance(d, R, alpha, x, y, n=10_000, seed=0, policy=None,
                        level=mc.DEFAULT_LEVEL):
    """Cov(field(x), field(y)) under the stationary law, with CI.

    Uses the dual route: the pair (x, y) is correlated exactly when their
    walkers merge, so Cov = alpha*(1-alpha)*P(merge); the merge probability
    is kept in the meta for two-way consistency checks against the direct
    meeting-probability estimator.
    """
    x = lattice.as_point(x, d)
    y = lattice.as_point(y, d)
    if x == y:
        raise ValueError("covariance of a site with itself is alpha*(1-alpha)")
    if policy is None:
        policy = coalescence.DEFAULT_STOPPING
    absorbed, _, reasons, worst_q = coalescence.batch_merge_counts(
        [x, y], R=R, n=n, seed=seed, policy=policy)
    merged = int((absorbed > 0).sum())
    pm = mc.proportion_estimate(merged, n, level=level)
    scale = alpha * (1.0 - alpha)
    return mc.EstimateWithCI(
        value=scale * pm.value, stderr=scale * pm.stderr,
        ci_lo=scale * pm.ci_lo, ci_hi=scale * pm.ci_hi, n=n, level=level,
        meta={"d": d, "R": R, "alpha": alpha, "x": x, "y": y,
              "merge_prob": pm.value, "worst_qsum": worst_q})


def pair_law_tv(d, R, alpha, x, y, n=100_000, seed=0, policy=None,
                level=mc.DEFAULT_LEVEL):
    """Total-variation distance of the joint law of (field(x), field(y))
    from the product Bernoulli law, with CI.

    Conditional on the dual walkers merging, both sites share one colour;
    otherwise they are independent.  TV = merge_prob * alpha * (1 - alpha)
    exactly, so the estimate inherits the merge-probability CI.
    """
    x = lattice.as_point(x, d)
    y = lattice.as_point(y, d)
    if policy is None:
        policy = coalescence.DEFAULT_STOPPING
    absorbed, _, _, worst_q = coalescence.batch_merge_counts(
        [x, y], R=R, n=n, seed=seed, policy=policy)
    merged = int((absorbed > 0).sum())
    pm = mc.proportion_estimate(merged, n, level=level)
    # patterns 11 and 00 each gain pm*alpha*(1-alpha) over the product law,
    # 10 and 01 each lose the same amount: TV = half the L1 sum = 2*pm*a
    a = alpha * (1.0 - alpha)
    tv = 2.0 * a * pm.value
    return mc.EstimateWithCI(
        value=tv, stderr=2.0 * a * pm.stderr, ci_lo=2.0 * a * pm.ci_lo,
        ci_hi=2.0 * a * pm.ci_hi, n=n, level=level,
        meta={"d": d, "R": R, "alpha": alpha, "x": x, "y": y,
              "merge_prob": pm.value, "worst_qsum": worst_q})


def check_local_bernoulli(d, R, alpha, points, n=20_000, seed=0, policy=None,
                          sampler=None):
    """Empirical joint law on up to 4 sites vs the product Bernoulli law.

    Returns a dict with the empirical pattern frequencies, the product-law
    probabilities, their total-variation distance, and the largest
    per-pattern deviation in Wilson-CI units.
    """
    pts = [lattice.as_point(p, d) for p in points]
    if not 1 <= len(pts) <= 4:
        raise ValueError("joint-law check supports 1..4 sites")
    if sampler is None:
        def sampler(s):
            return sample_mu(d, R, alpha, pts, seed=s, policy=policy)
    counts = {bits: 0 for bits in itertools.product((0, 1), repeat=len(pts))}
    for i, s in enumerate(mc.replicate_seeds(seed, n, stream=23)):
        fld = sampler(int(s) + i)
        bits = tuple(fld.value_at(p) for p in pts)
        counts[bits] += 1
    tv = 0.0
    worst_sigma = 0.0
    table = {}
    for bits, k in counts.items():
        p_prod = 1.0
        for b in bits:
            p_prod *= alpha if b else 1.0 - alpha
        emp = k / n
        tv += abs(emp - p_prod)
        lo, hi = mc.wilson_interval(k, n)
        if p_prod < lo:
            worst_sigma = max(worst_sigma, (lo - p_prod) / max(hi - emp, 1e-12))
        elif p_prod > hi:
            worst_sigma = max(worst_sigma, (p_prod - hi) / max(emp - lo, 1e-12))
        table[bits] = {"count": k, "empirical": emp, "product": p_prod,
                       "ci": (lo, hi)}
    return {"tv": 0.5 * tv, "patterns": table, "n": n,
            "worst_ci_excess": worst_sigma}


def estimates_to_csv(path, param_names, rows, comments=()):
    """CSV table of EstimateWithCI rows: param columns + the standard tail."""
    header = list(param_names) + ["estimate", "stderr", "ci_lo", "ci_hi", "n"]
    out = []
    for params, est in rows:
        tail = est.as_row()
        out.append(list(params) + [tail["estimate"], tail["stderr"],
                                   tail["ci_lo"], tail["ci_hi"], tail["n"]])
    return io.write_csv(path, header, out, comments=comments)
