"""Monte-Carlo verification of the two correlation inequalities.

Both inequalities bound a dependent quantity by a product over site pairs of
(1 + meet_prob * scale):

* merge-moment bound: for walkers started on a finite set A and any
  beta in (0,1),  E[beta^-(number of A-points absorbed into other blocks)]
  <= prod over unordered pairs {x,y} of A of (1 + meet(x,y)*(beta^-2 - 1));
* disjoint-translates bound: for a window event E with base B containing 0
  and pairwise-disjoint translates x_i + B,
  P_stationary(all translates of E occur) <= pi(E)^n * prod over unordered
  pairs of the union of (1 + meet(u,v)*(pi(E)^-2 - 1)),
  where pi(E) is the event's probability under the iid Bernoulli field.

Verdicts compose confidence intervals conservatively: "pass" needs the LHS
upper CI below the RHS evaluated with *lower*-CI meeting probabilities,
"fail" needs the LHS lower CI above the RHS with upper-CI meeting
probabilities, anything else is "inconclusive".  A fail therefore indicates
a genuine bug somewhere, not noise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import coalescence, io, lattice, mc, measure, walks

# tighter convergence target than the sampling default: bound checks care
# about the absorbed-count distribution, not just one-point marginals.  The
# time horizon is short: merges after the initial burst are rare, the
# undercount is one-sided (it can only shrink the LHS), and the residual
# pair-meeting budget at stop is disclosed in every report.
BOUNDS_STOPPING = coalescence.StoppingPolicy(eps_stop=1e-4, t_max=128.0,
                                             max_events=20_000_000,
                                             check_every=8192)


@dataclass
class InequalityReport:
    kind: str
    params: dict
    lhs: mc.EstimateWithCI
    rhs_lo: float
    rhs_hi: float
    verdict: str
    margin: float
    notes: list = field(default_factory=list)
    seed: int = 0

    def to_payload(self):
        return {
            "kind": self.kind,
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.params.items()},
            "lhs": self.lhs.as_row(),
            "rhs_lo": self.rhs_lo,
            "rhs_hi": self.rhs_hi,
            "verdict": self.verdict,
            "margin": self.margin,
            "notes": list(self.notes),
            "seed": self.seed,
        }

    def dump_json(self, path):
        return io.write_json(path, self.to_payload())


def _verdict(lhs, rhs_lo, rhs_hi):
    if lhs.ci_hi <= rhs_lo:
        return "pass"
    if lhs.ci_lo > rhs_hi:
        return "fail"
    return "inconclusive"


def _canonical_sep(z):
    """Meeting probability is invariant under coordinate permutation and
    sign flips of the separation, so cache on the sorted absolute vector."""
    return tuple(sorted(abs(c) for c in z))


_TABLE_CACHE = {}


def _meet_table(d, R, box_r):
    key = (d, R, box_r)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = walks.meet_probability_table(d, R, box_r=box_r)
    return _TABLE_CACHE[key]


def pairwise_meet_bounds(d, R, separations, level=mc.DEFAULT_LEVEL):
    """(lo, hi) confidence bounds on the meeting probability per separation.

    Looks separations up in a shared visit-count table; anything beyond the
    tabulated box gets the per-radius decay envelope as its upper bound (and
    0 as the lower bound, which only loosens verdicts, never breaks them).
    """
    canon = {}
    for z in separations:
        canon.setdefault(_canonical_sep(z), z)
    rmax = max(max(c) for c in canon) if canon else 1
    box_r = min(rmax, 14)
    table = _meet_table(d, R, box_r)
    env = walks.cached_envelope(d, R, box_r=box_r)
    zq = stats.norm.ppf(0.5 + level / 2.0)
    out = {}
    for key in canon:
        r = max(key)
        if r == 0:
            raise ValueError("coincident points have no pair bound")
        if r <= box_r:
            ratio, se = table.lookup(key)
            lo = max(0.0, ratio - zq * se)
            hi = min(1.0, ratio + zq * se)
        else:
            lo = 0.0
            hi = min(1.0, env[box_r] * (box_r / r) ** (d - 2))
        out[key] = (lo, hi)
    return out


def product_rhs(separations, meet_bounds, scale):
    """(lo, hi) of prod (1 + meet * scale) over the given separations."""
    log_lo = 0.0
    log_hi = 0.0
    for z in separations:
        lo, hi = meet_bounds[_canonical_sep(z)]
        log_lo += np.log1p(lo * scale)
        log_hi += np.log1p(hi * scale)
    return float(np.exp(log_lo)), float(np.exp(log_hi))


def check_merge_moment(A, R=1, beta=0.5, n=100_000, seed=0, policy=None,
                       level=mc.DEFAULT_LEVEL):
    """Verify the merge-moment bound for walker set A and one beta.

    LHS replicates beta^-(absorbed count) over engine runs; RHS multiplies
    (1 + meet(x,y)*(beta^-2 - 1)) over the unordered pairs of A.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly inside (0, 1)")
    pts = [lattice.as_point(p) for p in A]
    d = len(pts[0])
    if policy is None:
        policy = BOUNDS_STOPPING
    params = {"A": [tuple(p) for p in pts], "d": d, "R": R, "beta": beta,
              "n": n, "eps_stop": policy.eps_stop, "t_max": policy.t_max}
    notes = ["early stopping can only under-merge, which lowers the LHS; "
             "the achieved pair-meeting bound is recorded below"]
    if len(pts) == 1:
        lhs = mc.EstimateWithCI(1.0, 0.0, 1.0, 1.0, n, level,
                                {"exact": "single point, nothing can merge"})
        return InequalityReport(kind="merge_moment", params=params, lhs=lhs,
                                rhs_lo=1.0, rhs_hi=1.0, verdict="pass",
                                margin=0.0, notes=notes, seed=seed)
    absorbed, _, reasons, worst_q = coalescence.batch_merge_counts(
        pts, R=R, n=n, seed=seed, policy=policy)
    vals = beta ** (-absorbed.astype(np.float64))
    lhs = mc.mean_estimate(vals, level=level)
    seps = [tuple(b - a for a, b in zip(p, q))
            for p, q in itertools.combinations(pts, 2)]
    meet = pairwise_meet_bounds(d, R, seps, level=level)
    rhs_lo, rhs_hi = product_rhs(seps, meet, beta ** -2 - 1.0)
    notes.append(f"worst achieved pair bound {worst_q:.2e}; "
                 f"stop reasons {np.bincount(reasons, minlength=4).tolist()}")
    return InequalityReport(kind="merge_moment", params=params, lhs=lhs,
                            rhs_lo=rhs_lo, rhs_hi=rhs_hi,
                            verdict=_verdict(lhs, rhs_lo, rhs_hi),
                            margin=rhs_lo - lhs.ci_hi, notes=notes, seed=seed)


def exact_pi_alpha(event, alpha):
    """Exact iid-Bernoulli(alpha) probability of a small-base window event."""
    if isinstance(event, measure.CylinderEvent):
        return event.prob_product(alpha)
    base = tuple(event.base)
    if len(base) > 20:
        raise ValueError("base set too large for exact enumeration")
    if hasattr(event, "occurs_values"):
        total = 0.0
        for bits in itertools.product((0, 1), repeat=len(base)):
            if event.occurs_values(np.array(bits, dtype=np.uint8)):
                ones = sum(bits)
                total += alpha ** ones * (1 - alpha) ** (len(base) - ones)
        return total
    return event.prob_product(alpha)


def _event_evaluator(event, union_points):
    """Fast per-replicate evaluator: flat union values -> event indicator."""
    index = {p: i for i, p in enumerate(union_points)}
    base = tuple(event.base)
    idx = np.array([index[p] for p in base], dtype=np.int64)
    if isinstance(event, measure.CylinderEvent):
        want = np.array([event.constraints[p] for p in base], dtype=np.uint8)

        def ev(vals):
            return bool((vals[idx] == want).all())
    elif hasattr(event, "occurs_values"):
        def ev(vals):
            return event.occurs_values(vals[idx])
    else:
        def ev(vals):
            assign = {p: int(vals[index[p]]) for p in base}
            return bool(event.predicate(assign))
    return ev


def check_disjoint_translates(B, event, shifts, alpha, R=1, n_samples=50_000,
                              seed=0, policy=None, level=mc.DEFAULT_LEVEL,
                              pi_mc_n=50_000):
    """Verify the disjoint-translates bound.

    B: the base window (iterable of points, must contain 0, must cover the
    event's base); event: a window event; shifts: the translate offsets.
    """
    Bpts = [lattice.as_point(p) for p in B]
    d = len(Bpts[0])
    if (0,) * d not in Bpts:
        raise ValueError("base window must contain the origin")
    if policy is None:
        policy = BOUNDS_STOPPING
    base = [lattice.as_point(p) for p in event.base]
    if not set(base) <= set(Bpts):
        raise ValueError("event base must live inside the base window")
    shifts = [lattice.as_point(x, d) for x in shifts]
    translates = [{tuple(int(c) for c in row)
                   for row in lattice.shift_points(np.array(Bpts), x)}
                  for x in shifts]
    for i in range(len(translates)):
        for j in range(i + 1, len(translates)):
            if translates[i] & translates[j]:
                raise ValueError(
                    f"translates {shifts[i]} and {shifts[j]} overlap")
    union_points = sorted(set().union(*translates))
    params = {"d": d, "R": R, "alpha": alpha, "n_samples": n_samples,
              "n_translates": len(shifts), "B_size": len(Bpts),
              "shifts": [tuple(x) for x in shifts],
              "eps_stop": policy.eps_stop, "t_max": policy.t_max}
    notes = []

    # pi(E): exact when the base is small, MC with CI otherwise
    try:
        pi_exact = exact_pi_alpha(event, alpha)
        pi_lo = pi_hi = pi_exact
        notes.append(f"pi(E) = {pi_exact} computed exactly")
    except ValueError:
        if not hasattr(event, "pi_reference"):
            raise
        pi_est = event.pi_reference(alpha, n=pi_mc_n, seed=seed + 17,
                                    level=level)
        pi_lo, pi_hi = pi_est.ci_lo, pi_est.ci_hi
        notes.append(f"pi(E) estimated: {pi_est.value:.5f} "
                     f"[{pi_lo:.5f}, {pi_hi:.5f}]")
    if pi_hi <= 0.0:
        raise ValueError("event has zero probability under the product law; "
                         "the bound's right side is undefined")
    pi_lo = max(pi_lo, 1e-12)

    # LHS: joint occurrence frequency under the stationary law on the union
    evaluators = [_event_evaluator(event.shift(x), union_points)
                  for x in shifts]
    A = np.array(union_points, dtype=np.int64)
    seeds = mc.replicate_seeds(seed, n_samples, stream=40)
    rng = mc.generator_for(seed, stream=41)
    qtable = walks.cached_envelope(d, R)
    hits = 0
    worst_q = 0.0
    for k in range(n_samples):
        labels, achieved, reason, _ = coalescence.run_labels(
            A, R=R, seed32=int(seeds[k]), policy=policy, qtable=qtable)
        vals = measure._paint_blocks(labels, alpha, rng)
        if all(ev(vals) for ev in evaluators):
            hits += 1
        if np.isfinite(achieved):
            worst_q = max(worst_q, achieved)
    lhs = mc.proportion_estimate(hits, n_samples, level=level)
    notes.append(f"worst achieved pair bound {worst_q:.2e}")

    # RHS = pi^n * prod over union pairs, extremized over the pi interval
    seps = [tuple(b - a for a, b in zip(p, q))
            for p, q in itertools.combinations(union_points, 2)]
    meet = pairwise_meet_bounds(d, R, seps, level=level)
    m = len(shifts)
    rhs_lo = np.inf
    rhs_hi = -np.inf
    for pi in np.linspace(pi_lo, pi_hi, 21):
        scale = pi ** -2 - 1.0
        plo, phi = product_rhs(seps, meet, scale)
        rhs_lo = min(rhs_lo, pi ** m * plo)
        rhs_hi = max(rhs_hi, pi ** m * phi)
    return InequalityReport(kind="disjoint_translates", params=params,
                            lhs=lhs, rhs_lo=float(rhs_lo),
                            rhs_hi=float(rhs_hi),
                            verdict=_verdict(lhs, rhs_lo, rhs_hi),
                            margin=float(rhs_lo) - lhs.ci_hi, notes=notes,
                            seed=seed)


# ---------------------------------------------------------------------------
# batteries


def default_battery(d=3):
    """>= 20 parameter sets spanning both inequalities."""
    e1 = (1,) + (0,) * (d - 1)
    e2 = (0, 1) + (0,) * (d - 2)
    sets = []
    pair = [(0,) * d, (4,) + (0,) * (d - 1)]
    triple = [(0,) * d, (3, 1) + (0,) * (d - 2), (-2, 2) + (0,) * (d - 2)]
    quad = [(0,) * d, (2,) + (0,) * (d - 1), (0, 3) + (0,) * (d - 2),
            (4, 4) + (0,) * (d - 2)]
    for A in (pair, triple, quad):
        for R in (2, 4):
            for beta in (0.3, 0.5, 0.8):
                sets.append(("merge_moment",
                             {"A": A, "R": R, "beta": beta}))
    one = measure.CylinderEvent({(0,) * d: 1})
    two = measure.CylinderEvent({(0,) * d: 1, e1: 0})
    for ev, Bpts, name in ((one, [(0,) * d], "one_site"),
                           (two, [(0,) * d, e1], "two_site")):
        for alpha in (0.4, 0.6):
            sets.append(("disjoint_translates",
                         {"B": Bpts, "event": ev, "alpha": alpha, "R": 2,
                          "shifts": [(0,) * d, (12,) + (0,) * (d - 1),
                                     (0, 12) + (0,) * (d - 2)],
                          "label": name}))
    return sets


def run_battery(sets, n=20_000, seed=0, policy=None):
    """Run every parameter set; returns the list of reports."""
    reports = []
    for i, (kind, ps) in enumerate(sets):
        if kind == "merge_moment":
            rep = check_merge_moment(ps["A"], R=ps["R"], beta=ps["beta"],
                                     n=n, seed=seed + i, policy=policy)
        elif kind == "disjoint_translates":
            rep = check_disjoint_translates(
                ps["B"], ps["event"], ps["shifts"], ps["alpha"], R=ps["R"],
                n_samples=n, seed=seed + i, policy=policy)
        else:
            raise ValueError(f"unknown battery kind {kind!r}")
        reports.append(rep)
    return reports


def battery_csv(path, reports, comments=()):
    header = ["kind", "params", "lhs", "lhs_ci_lo", "lhs_ci_hi", "rhs_lo",
              "rhs_hi", "margin", "verdict", "n", "seed"]
    rows = []
    for rep in reports:
        rows.append([rep.kind, repr(rep.params), rep.lhs.value,
                     rep.lhs.ci_lo, rep.lhs.ci_hi, rep.rhs_lo, rep.rhs_hi,
                     rep.margin, rep.verdict, rep.lhs.n, rep.seed])
    return io.write_csv(path, header, rows, comments=comments)
