"""Merging random-walk systems with marked blocks.

Start one walker per point of a finite set A.  Each point initially marks
its own singleton block.  When two walkers collide, their blocks merge and
exactly one of the two marks survives:

  * if the block cardinalities have different parity, the odd block's mark
    survives;
  * on equal parity, the lexicographically smaller mark point survives.

The surviving block then rides the surviving mark's walker.  The sub-system
of odd-cardinality blocks behaves like annihilating walkers: a merge of two
odd blocks removes both their marks from the odd view, every other merge
leaves the odd view unchanged.

`MarkedPartition` implements the bookkeeping rule by itself (used directly
in tests and to replay run logs); `run_coalescence` drives the compiled
engine and wraps its output in a `CoalescenceRun`, whose replay facilities
re-derive every merge through `MarkedPartition` and verify the engine agreed
with the rule.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, io, lattice, mc, walks

STOP_REASONS = {0: "converged", 1: "t_max", 2: "max_events", 3: "overflow"}


class MarkedPartition:
    """Partition of a finite point set with one distinguished mark per block."""

    def __init__(self, points):
        pts = [lattice.as_point(p) for p in points]
        if len(set(pts)) != len(pts):
            raise ValueError("duplicate points in initial set")
        if not pts:
            raise ValueError("empty initial set")
        d = len(pts[0])
        for p in pts:
            if len(p) != d:
                raise ValueError("points of mixed dimension")
        self.d = d
        self._blocks = {p: frozenset([p]) for p in pts}

    @property
    def points(self):
        out = []
        for b in self._blocks.values():
            out.extend(b)
        return sorted(out)

    def marks(self):
        return sorted(self._blocks)

    def is_mark(self, x):
        return lattice.as_point(x, self.d) in self._blocks

    def block(self, mark):
        mark = lattice.as_point(mark, self.d)
        try:
            return self._blocks[mark]
        except KeyError:
            raise KeyError(f"{mark} is not a current mark") from None

    def mark_of(self, x):
        x = lattice.as_point(x, self.d)
        for m, b in self._blocks.items():
            if x in b:
                return m
        raise KeyError(f"{x} is not in the partition")

    def merge_blocks(self, x, y):
        """Merge the blocks marked x and y; returns (survivor, both_odd).

        Errors if either argument is not a current mark (e.g. its block was
        already absorbed) or if both name the same block.
        """
        x = lattice.as_point(x, self.d)
        y = lattice.as_point(y, self.d)
        if x not in self._blocks:
            raise ValueError(f"{x} is not a current mark")
        if y not in self._blocks:
            raise ValueError(f"{y} is not a current mark")
        if x == y:
            raise ValueError("cannot merge a block with itself")
        bx, by = self._blocks[x], self._blocks[y]
        x_odd = len(bx) % 2 == 1
        y_odd = len(by) % 2 == 1
        if x_odd and not y_odd:
            survivor = x
        elif y_odd and not x_odd:
            survivor = y
        else:
            survivor = x if lattice.lex_less(x, y) else y
        loser = y if survivor == x else x
        self._blocks[survivor] = bx | by
        del self._blocks[loser]
        return survivor, (x_odd and y_odd)

    def odd_marks(self):
        """Marks of odd-cardinality blocks (the annihilating sub-system)."""
        return sorted(m for m, b in self._blocks.items() if len(b) % 2 == 1)

    def __len__(self):
        return len(self._blocks)


@dataclass(frozen=True)
class AnnihilatingView:
    """Odd-cardinality marks at a fixed time, plus the removal tally."""
    odd_marks: tuple
    all_marks: tuple
    both_odd_merges: int
    n_points: int

    def __post_init__(self):
        assert set(self.odd_marks) <= set(self.all_marks)
        assert len(self.odd_marks) == self.n_points - 2 * self.both_odd_merges
        assert len(self.odd_marks) % 2 == self.n_points % 2


@dataclass(frozen=True)
class StoppingPolicy:
    """When a run may stop before every collision has been resolved.

    eps_stop targets the summed meeting-probability bound over live pairs:
    once it drops below eps_stop, the expected number of future merges is
    below eps_stop, so the law of the final partition is within eps_stop
    total variation of the infinite-horizon one.  t_max and max_events are
    hard caps for regimes where that target is out of reach; the achieved
    bound is recorded on the run either way.  Runs stopped early under-merge
    (one-sided bias).
    """
    eps_stop: float = 1e-3
    t_max: float = 8192.0
    max_events: int = 20_000_000
    check_every: int = 2048
    pair_cutoff: int = 2_000_000
    sub_pairs: int = 4096

    def __post_init__(self):
        if self.eps_stop <= 0 or self.t_max <= 0 or self.max_events < 1:
            raise ValueError("stopping thresholds must be positive")


DEFAULT_STOPPING = StoppingPolicy()


@dataclass(frozen=True)
class MergeRecord:
    t: float
    a: tuple          # mark that jumped
    b: tuple          # mark whose site was hit
    survivor: tuple
    both_odd: bool


@dataclass
class CoalescenceRun:
    """Everything one engine run produced, with replay helpers."""
    points: tuple
    d: int
    R: int
    seed: int
    policy: StoppingPolicy
    t_end: float
    n_events: int
    stop_reason: str
    achieved_qsum: float
    merges: list
    final_positions: dict
    labels: np.ndarray          # labels[i] = walker index of i's mark
    index_of: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index_of:
            self.index_of = {p: i for i, p in enumerate(self.points)}

    def marks(self):
        return sorted(self.points[i] for i in range(len(self.points))
                      if self.labels[i] == i)

    def mark_of(self, x):
        x = lattice.as_point(x, self.d)
        return self.points[self.labels[self.index_of[x]]]

    def block_map(self):
        out = {}
        for i, p in enumerate(self.points):
            out.setdefault(self.points[self.labels[i]], []).append(p)
        return {m: tuple(sorted(b)) for m, b in out.items()}

    def merge_times(self):
        return [m.t for m in self.merges]

    def both_odd_total(self):
        return sum(1 for m in self.merges if m.both_odd)

    def non_mark_count(self):
        """|initial points that are no longer marks|."""
        return len(self.points) - len(self.marks())

    def partition_at(self, t=None, verify=True):
        """Replay the merge log up to time t through MarkedPartition.

        With verify=True (default) the replayed survivor of every merge must
        match what the engine logged, which re-checks the parity/order rule.
        """
        part = MarkedPartition(self.points)
        upto = len(self.merges) if t is None else bisect.bisect_right(
            self.merge_times(), t)
        for rec in self.merges[:upto]:
            survivor, both_odd = part.merge_blocks(rec.a, rec.b)
            if verify and (survivor != rec.survivor or both_odd != rec.both_odd):
                raise AssertionError(
                    f"engine log disagrees with the merge rule at t={rec.t}: "
                    f"log says {rec.survivor}/{rec.both_odd}, rule says "
                    f"{survivor}/{both_odd}")
        return part

    def annihilating_view(self, t=None):
        part = self.partition_at(t)
        upto = len(self.merges) if t is None else bisect.bisect_right(
            self.merge_times(), t)
        n_oo = sum(1 for rec in self.merges[:upto] if rec.both_odd)
        return AnnihilatingView(odd_marks=tuple(part.odd_marks()),
                                all_marks=tuple(part.marks()),
                                both_odd_merges=n_oo,
                                n_points=len(self.points))

    def run_log_payload(self):
        return {
            "kind": "coalescence_run",
            "d": self.d,
            "R": self.R,
            "seed": self.seed,
            "n_points": len(self.points),
            "points": [list(p) for p in self.points],
            "policy": {
                "eps_stop": self.policy.eps_stop,
                "t_max": self.policy.t_max,
                "max_events": self.policy.max_events,
            },
            "t_end": self.t_end,
            "n_events": self.n_events,
            "stop_reason": self.stop_reason,
            "achieved_qsum": self.achieved_qsum,
            "merges": [
                {"t": m.t, "a": list(m.a), "b": list(m.b),
                 "survivor": list(m.survivor), "both_odd": bool(m.both_odd)}
                for m in self.merges
            ],
            "final_marks": [list(m) for m in self.marks()],
            "final_positions": {str(i): list(self.final_positions[p])
                                for i, p in enumerate(self.points)},
        }

    def dump_json(self, path):
        return io.write_json(path, self.run_log_payload())


def _qtable(d, R):
    return walks.cached_envelope(d, R)


def run_coalescence(points, d=None, R=1, seed=0, policy=None, qtable=None):
    """Run the compiled engine from one walker per point.

    Returns a CoalescenceRun.  The walker indexed i starts at points[i]; the
    run log and all derived views speak in mark points, not indices.
    """
    pts = [lattice.as_point(p, d) for p in points]
    if not pts:
        raise ValueError("empty starting set")
    d = len(pts[0])
    if len(set(pts)) != len(pts):
        raise ValueError("duplicate starting points")
    if policy is None:
        policy = DEFAULT_STOPPING
    if qtable is None:
        qtable = _qtable(d, R)
    A = np.array(pts, dtype=np.int64)
    jumps = lattice.jump_offsets(R, d)
    seed32 = int(mc.replicate_seeds(seed, 1)[0])
    (parent, pos, t_end, n_events, n_merges, achieved, reason,
     log_t, log_a, log_b, log_surv, log_oo) = _kernels.coalesce_run(
        A, jumps, qtable, float(d - 2), policy.eps_stop, policy.t_max,
        policy.max_events, seed32, policy.check_every, policy.pair_cutoff,
        policy.sub_pairs)
    merges = [
        MergeRecord(t=float(log_t[k]), a=pts[int(log_a[k])],
                    b=pts[int(log_b[k])], survivor=pts[int(log_surv[k])],
                    both_odd=bool(log_oo[k]))
        for k in range(n_merges)
    ]
    final_positions = {p: tuple(int(c) for c in pos[i])
                       for i, p in enumerate(pts)}
    return CoalescenceRun(points=tuple(pts), d=d, R=R, seed=seed,
                          policy=policy, t_end=float(t_end),
                          n_events=int(n_events),
                          stop_reason=STOP_REASONS[int(reason)],
                          achieved_qsum=float(achieved), merges=merges,
                          final_positions=final_positions, labels=parent)


def run_labels(A, R=1, seed32=0, policy=None, qtable=None, jumps=None):
    """Raw engine run: block labels only, no per-merge record objects.

    A is an (n, d) int64 array of starting points; seed32 feeds the engine
    directly.  Returns (labels, achieved_qsum, stop_reason_code, t_end).
    Use this in replicated loops; use run_coalescence when you want the log.
    """
    d = A.shape[1]
    if policy is None:
        policy = DEFAULT_STOPPING
    if qtable is None:
        qtable = _qtable(d, R)
    if jumps is None:
        jumps = lattice.jump_offsets(R, d)
    res = _kernels.coalesce_run(
        A, jumps, qtable, float(d - 2), policy.eps_stop, policy.t_max,
        policy.max_events, seed32, policy.check_every, policy.pair_cutoff,
        policy.sub_pairs)
    return res[0], float(res[5]), int(res[6]), float(res[2])


def batch_merge_counts(points, R=1, n=1000, seed=0, policy=None, qtable=None):
    """Replicated runs returning (absorbed, both_odd, reasons, worst_qsum).

    absorbed[k] = number of starting points that are not final marks in
    replicate k; both_odd[k] = merges of two odd blocks in replicate k.
    """
    pts = [lattice.as_point(p) for p in points]
    d = len(pts[0])
    if policy is None:
        policy = DEFAULT_STOPPING
    if qtable is None:
        qtable = _qtable(d, R)
    A = np.array(pts, dtype=np.int64)
    jumps = lattice.jump_offsets(R, d)
    seeds = mc.replicate_seeds(seed, n, stream=2)
    absorbed, both_odd, reasons, worst_q = _kernels.coalesce_batch_counts(
        A, jumps, qtable, float(d - 2), policy.eps_stop, policy.t_max,
        policy.max_events, seeds, policy.check_every, policy.pair_cutoff,
        policy.sub_pairs)
    return absorbed, both_odd, reasons, float(worst_q)
