"""Integer-lattice geometry: norms, balls, spheres, adjacency, ordering, shifts.

Everything downstream (walks, coalescence, field samplers, renormalization)
speaks in terms of these primitives.  Points are plain integer tuples; bulk
data is int64 numpy arrays with one row per point.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

Point = tuple[int, ...]


def as_point(x, d: int | None = None) -> Point:
    p = tuple(int(c) for c in x)
    if d is not None and len(p) != d:
        raise ValueError(f"expected a {d}-dimensional point, got {p}")
    return p


def linf_norm(x) -> int:
    """ℓ∞ norm: max over coordinate absolute values."""
    return max(abs(int(c)) for c in x)


def l1_norm(x) -> int:
    """ℓ1 norm: sum of coordinate absolute values."""
    return sum(abs(int(c)) for c in x)


def lex_less(x, y) -> bool:
    """The fixed well-ordering on lattice points: lexicographic on coordinates.

    Deterministic and cheap; used to break ties reproducibly wherever a
    canonical choice between two points is needed.
    """
    if len(x) != len(y):
        raise ValueError("points of different dimension are not comparable")
    return tuple(x) < tuple(y)


def l1_ball(center, R: int) -> list[Point]:
    """All lattice points within ℓ1 distance R of center (R ≥ 1)."""
    if R < 1:
        raise ValueError("l1 ball radius must be >= 1 (a jump must move)")
    center = as_point(center)
    d = len(center)
    rng = range(-R, R + 1)
    out = []
    for off in itertools.product(rng, repeat=d):
        if sum(abs(c) for c in off) <= R:
            out.append(tuple(c + o for c, o in zip(center, off)))
    return out


def l1_ball_cardinality(R: int, d: int) -> int:
    """|{x : |x|_1 <= R}| = sum_k 2^k C(d,k) C(R,k)."""
    return sum(2 ** k * comb(d, k) * comb(R, k) for k in range(0, min(d, R) + 1))


def jump_offsets(R: int, d: int) -> np.ndarray:
    """The (|B_1(R)|-1, d) int64 array of nonzero offsets with |v|_1 <= R.

    Sorted lexicographically so that the jump law is reproducible; a single
    uniform index into this array is one spread-out jump.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    rng = range(-R, R + 1)
    pts = [p for p in itertools.product(rng, repeat=d)
           if 0 < sum(abs(c) for c in p) <= R]
    pts.sort()
    arr = np.array(pts, dtype=np.int64)
    assert arr.shape[0] == l1_ball_cardinality(R, d) - 1
    return arr


def linf_ball_cardinality(L: int, d: int) -> int:
    """|B(L)| = (2L+1)^d."""
    if L < 0:
        raise ValueError("radius must be >= 0")
    return (2 * L + 1) ** d


def box_points(center, radius: int) -> np.ndarray:
    """All points of the ℓ∞ box B(center, radius), lexicographically ordered.

    Returns an (n, d) int64 array; the ordering is the canonical site order
    used by every field serializer and sampler in the package.
    """
    center = as_point(center)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    d = len(center)
    g = [np.arange(c - radius, c + radius + 1, dtype=np.int64) for c in center]
    mesh = np.meshgrid(*g, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sphere_points(radius: int, d: int) -> np.ndarray:
    """All points with ℓ∞ norm exactly `radius` (lexicographic order)."""
    if radius == 0:
        return np.zeros((1, d), dtype=np.int64)
    pts = box_points((0,) * d, radius)
    keep = np.abs(pts).max(axis=1) == radius
    return pts[keep]


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned ball description: membership is a single norm inequality."""

    center: Point
    radius: int
    norm: str = "linf"  # "linf" or "l1"

    def __post_init__(self):
        if self.norm not in ("linf", "l1"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "center", as_point(self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    def contains(self, x) -> bool:
        off = tuple(int(a) - int(b) for a, b in zip(x, self.center))
        if self.norm == "linf":
            return linf_norm(off) <= self.radius
        return l1_norm(off) <= self.radius

    def points(self) -> np.ndarray:
        if self.norm == "linf":
            return box_points(self.center, self.radius)
        pts = np.array(sorted(l1_ball(self.center, max(self.radius, 1))),
                       dtype=np.int64)
        if self.radius == 0:
            return np.array([self.center], dtype=np.int64)
        keep = np.abs(pts - np.array(self.center)).sum(axis=1) <= self.radius
        return pts[keep]

    def cardinality(self) -> int:
        if self.norm == "linf":
            return linf_ball_cardinality(self.radius, self.d)
        return l1_ball_cardinality(self.radius, self.d)


def shift_points(points: np.ndarray, x) -> np.ndarray:
    """Translate a point array by x."""
    return points + np.asarray(as_point(x), dtype=np.int64)
