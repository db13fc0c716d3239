"""Independent reference implementations used to cross-check the fast paths.

Everything here favors clarity over speed: plain BFS for cluster structure,
a vectorized-but-naive separation walk for meeting probabilities, and a
merge-log replay for coalescence runs.  None of it imports the compiled
kernels.
"""
from collections import deque

import numpy as np

from voterperc import lattice


def bfs_partition(fld, value=1, adjacency="nn"):
    """Clusters of `value` sites as a set of frozensets of points."""
    if adjacency == "nn":
        offs = [off for off in lattice.box_points((0,) * fld.d, 1)
                if abs(off).sum() == 1]
    elif adjacency == "linf":
        offs = [off for off in lattice.box_points((0,) * fld.d, 1)
                if abs(off).max() == 1]
    else:
        raise ValueError(adjacency)
    offs = [tuple(int(c) for c in o) for o in offs]
    open_sites = {p for p, v in zip(fld.points(), fld.values) if v == value}
    seen = set()
    clusters = set()
    for start in open_sites:
        if start in seen:
            continue
        comp = set()
        queue = deque([start])
        seen.add(start)
        while queue:
            p = queue.popleft()
            comp.add(p)
            for o in offs:
                q = tuple(a + b for a, b in zip(p, o))
                if q in open_sites and q not in seen:
                    seen.add(q)
                    queue.append(q)
        clusters.add(frozenset(comp))
    return clusters


def labeling_as_partition(labeling):
    """ClusterLabeling -> the same set-of-frozensets shape as bfs_partition."""
    comps = {}
    for p in labeling.field.points():
        lab = labeling.label_of(p)
        if lab >= 0:
            comps.setdefault(lab, set()).add(p)
    return {frozenset(c) for c in comps.values()}


def pair_meet_mc(d, R, z, n=20_000, seed=0, r_esc=300, max_steps=2_000_000):
    """P(separation walk from z hits 0 before leaving B(r_esc)), naive MC.

    The separation of two independent range-R walkers is itself a walk whose
    steps are uniform on B(R) minus the origin; a meeting is the separation
    hitting 0 at a jump.  Runs all replicates in lockstep with numpy.
    """
    jumps = lattice.jump_offsets(R, d)
    rng = np.random.Generator(np.random.PCG64(seed))
    pos = np.tile(np.asarray(z, dtype=np.int64), (n, 1))
    alive = np.ones(n, dtype=bool)
    met = np.zeros(n, dtype=bool)
    for _ in range(max_steps):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        picks = rng.integers(0, jumps.shape[0], size=idx.size)
        pos[idx] += jumps[picks]
        rad = np.abs(pos[idx]).max(axis=1)
        hit = rad == 0
        gone = rad >= r_esc
        met[idx[hit]] = True
        alive[idx[hit]] = False
        alive[idx[gone]] = False
    return met.sum() / n


def replay_partition(run):
    """Final block map recomputed from the merge log alone."""
    blocks = {p: {p} for p in run.points}
    for rec in run.merges:
        bx, by = blocks.pop(rec.a), blocks.pop(rec.b)
        x_odd, y_odd = len(bx) % 2 == 1, len(by) % 2 == 1
        if x_odd and not y_odd:
            surv = rec.a
        elif y_odd and not x_odd:
            surv = rec.b
        else:
            surv = min(rec.a, rec.b)
        blocks[surv] = bx | by
    return {m: tuple(sorted(b)) for m, b in blocks.items()}


def assert_coupling_invariants(run):
    """The three bookkeeping identities every coalescence run must satisfy.

    Returns the annihilating view so callers can keep asserting on it.
    """
    part = run.partition_at(verify=True)     # replays + checks every merge
    marks = set(part.marks())
    odd = set(part.odd_marks())
    assert odd <= marks, "odd-block marks must be a subset of all marks"
    n = len(run.points)
    removed = n - len(odd)
    assert removed % 2 == 0, "annihilating removals happen in pairs"
    assert removed == 2 * run.both_odd_total(), (
        "two odd blocks disappear from the odd system per odd-odd merge")
    # the engine's own label array tells the same story as the replay
    assert set(run.marks()) == marks
    assert run.block_map() == replay_partition(run)
    return run.annihilating_view()
