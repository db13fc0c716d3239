"""Multiscale tree embeddings on the 6^N scale ladder.

A depth-N binary tree is embedded into Z^d so that the root sits at 0, a
node at depth k sits on the lattice with spacing 6^(N-k)*L, and the two
children of a depth-k node sit at ℓ∞ distance exactly one and two times that
node's scale.  The leaf boxes B(center, 2L) of such an embedding are
pairwise disjoint and sparsely located, which is what turns one large
annulus crossing into many crossings of small well-separated annuli.

Two placement conventions both satisfy the constraints:

* "node": children are displaced by multiples of the *parent's* spacing
  (ℓ∞-sphere radii 1 and 2 in parent-lattice units) — the family that the
  closed-form count ((3^d-1)(5^d-3^d))^(2^N-1) enumerates;
* "fine": children sit anywhere on their own (finer) lattice at the right
  ℓ∞ distance — the family the constructive path->embedding map needs.

`validate_embedding` checks the constraints themselves and therefore
accepts both conventions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import io, lattice, mc

ENUM_GUARD = 10 ** 7


@dataclass(frozen=True)
class ScaleLadder:
    """The geometric scales 6^k * L and their nested lattices."""
    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("base scale L must be a positive integer")

    def scale(self, k):
        return 6 ** k * self.L

    def in_lattice(self, p, k):
        """Is p a point of the spacing-6^k*L sub-lattice?"""
        s = self.scale(k)
        return all(c % s == 0 for c in p)


def tree_indices(N, level=None):
    """All node indices of the depth-N binary tree, as strings over {1,2}.

    The root is the empty string; children append '1' or '2'.  With
    level=k, only the 2^k indices at that depth are returned.
    """
    if level is not None:
        return ["".join(w) for w in itertools.product("12", repeat=level)]
    out = []
    for k in range(N + 1):
        out.extend(tree_indices(N, level=k))
    return out


def child_count(d):
    """Per-internal-node choice count in the node-placement family."""
    return (3 ** d - 1) * (5 ** d - 3 ** d)


def embedding_count(N, d):
    """Closed-form size of the node-placement family at depth N."""
    return child_count(d) ** (2 ** N - 1)


@dataclass
class ProperEmbedding:
    """A placement of every tree index at a lattice point."""
    d: int
    L: int
    N: int
    placement: dict = field(default_factory=dict)

    def position(self, m):
        return self.placement[m]

    def leaves(self):
        return tree_indices(self.N, level=self.N)

    def leaf_centers(self):
        return [self.placement[m] for m in self.leaves()]

    def union_points(self):
        """All sites of the union of leaf boxes B(center, 2L)."""
        pts = []
        for c in self.leaf_centers():
            pts.extend(lattice.box_points(c, 2 * self.L))
        return pts

    def to_payload(self):
        return {"kind": "tree_embedding", "d": self.d, "L": self.L,
                "N": self.N,
                "placement": {m: list(p) for m, p in self.placement.items()}}

    def dump_json(self, path):
        return io.write_json(path, self.to_payload())

    @classmethod
    def from_payload(cls, doc):
        return cls(d=doc["d"], L=doc["L"], N=doc["N"],
                   placement={m: tuple(p) for m, p in doc["placement"].items()})


def validate_embedding(emb, reasons=None):
    """Check the three embedding constraints; True iff all hold.

    Pass a list as `reasons` to collect human-readable failure notes.
    """
    def note(msg):
        if reasons is not None:
            reasons.append(msg)

    ladder = ScaleLadder(emb.L)
    ok = True
    root = emb.placement.get("")
    if root is None or any(c != 0 for c in root):
        note(f"root at {root}, expected the origin")
        ok = False
    for k in range(emb.N + 1):
        for m in tree_indices(emb.N, level=k):
            p = emb.placement.get(m)
            if p is None:
                note(f"missing node {m!r}")
                ok = False
                continue
            if not ladder.in_lattice(p, emb.N - k):
                note(f"node {m!r} at {p} off the depth-{k} lattice")
                ok = False
    for k in range(emb.N):
        s = ladder.scale(emb.N - k)
        for m in tree_indices(emb.N, level=k):
            p = emb.placement.get(m)
            if p is None:
                continue
            for child, want in ((m + "1", s), (m + "2", 2 * s)):
                q = emb.placement.get(child)
                if q is None:
                    continue
                got = lattice.linf_norm(tuple(b - a for a, b in zip(p, q)))
                if got != want:
                    note(f"|{child!r} - {m!r}| = {got}, expected {want}")
                    ok = False
    return ok


def _sphere_offsets(d, radius):
    return lattice.sphere_points(radius, d)


def enumerate_embeddings(N, d, L):
    """Yield every node-placement embedding (see module docstring).

    The total count is ((3^d-1)(5^d-3^d))^(2^N-1); a guard refuses to
    enumerate families beyond 10^7.
    """
    total = embedding_count(N, d)
    if total > ENUM_GUARD:
        raise ValueError(f"enumeration of {total} embeddings exceeds the "
                         f"{ENUM_GUARD} guard")
    ladder = ScaleLadder(L)
    s1 = _sphere_offsets(d, 1)
    s2 = _sphere_offsets(d, 2)
    internal = [m for k in range(N) for m in tree_indices(N, level=k)]
    zero = (0,) * d

    choice_sets = [list(itertools.product(s1, s2)) for _ in internal]
    for combo in itertools.product(*choice_sets):
        placement = {"": zero}
        for m, (o1, o2) in zip(internal, combo):
            base = placement[m]
            s = ladder.scale(N - len(m))
            # the radius-1 and radius-2 spheres scaled by s give the required
            # child offsets s and 2s
            placement[m + "1"] = tuple(b + s * c for b, c in zip(base, o1))
            placement[m + "2"] = tuple(b + s * c for b, c in zip(base, o2))
        yield ProperEmbedding(d=d, L=L, N=N, placement=placement)


def sample_random_embedding(N, d, L, seed=0, placement="node", rng=None):
    """A uniform random embedding from either placement family."""
    if rng is None:
        rng = mc.generator_for(seed, stream=30)
    ladder = ScaleLadder(L)
    zero = (0,) * d
    out = {"": zero}
    if placement == "node":
        s1 = _sphere_offsets(d, 1)
        s2 = _sphere_offsets(d, 2)
        for k in range(N):
            s = ladder.scale(N - k)
            for m in tree_indices(N, level=k):
                base = out[m]
                o1 = s1[rng.integers(0, len(s1))]
                o2 = s2[rng.integers(0, len(s2))]
                out[m + "1"] = tuple(b + s * c for b, c in zip(base, o1))
                out[m + "2"] = tuple(b + s * c for b, c in zip(base, o2))
    elif placement == "fine":
        for k in range(N):
            child_spacing = ladder.scale(N - k - 1)
            for m in tree_indices(N, level=k):
                base = out[m]
                for suffix, mult in (("1", 6), ("2", 12)):
                    # uniform point of the radius-(mult) ℓ∞ sphere in child
                    # lattice units: resample until the norm is exact
                    while True:
                        off = rng.integers(-mult, mult + 1, size=d)
                        if np.abs(off).max() == mult:
                            break
                    out[m + suffix] = tuple(
                        b + child_spacing * int(c) for b, c in zip(base, off))
    else:
        raise ValueError(f"unknown placement family {placement!r}")
    return ProperEmbedding(d=d, L=L, N=N, placement=out)


# ---------------------------------------------------------------------------
# sparsity and pair-sum certificates


def box_distance(x, y, radius):
    """ℓ∞ distance between the boxes B(x, radius) and B(y, radius)."""
    return max(0, lattice.linf_norm(tuple(b - a for a, b in zip(x, y)))
               - 2 * radius)


def check_sparsity(emb, m0, k, validated=False):
    """Count leaves (other than m0) whose 2L-box comes within 6^k*L/2 of
    m0's, and compare with the 2^(k-1) target.

    Returns (count, bound, ok).  The count excludes m0 itself: with m0
    included the target already fails for sibling leaves at k=1, and the
    depth-0 tree pins the exclusive reading (count 0 there).
    """
    if k < 1:
        raise ValueError("sparsity is defined for k >= 1")
    if not validated and not validate_embedding(emb):
        raise ValueError("invalid embedding")
    c0 = emb.position(m0)
    thresh = 6 ** k * emb.L / 2.0
    count = 0
    for m in emb.leaves():
        if m == m0:
            continue
        if box_distance(c0, emb.position(m), 2 * emb.L) <= thresh:
            count += 1
    bound = 2 ** (k - 1)
    return count, bound, count <= bound


def sparsity_audit(emb, k_max=None, embedding_id=0):
    """check_sparsity over every leaf and k; CSV-ready rows.

    Columns: N, d, L, embedding_id, leaf, k, count, bound, pass.
    """
    if k_max is None:
        k_max = 3 * emb.N if emb.N else 1
    if not validate_embedding(emb):
        raise ValueError("invalid embedding")
    header = ["N", "d", "L", "embedding_id", "leaf", "k", "count", "bound",
              "pass"]
    rows = []
    for m0 in emb.leaves():
        for k in range(1, k_max + 1):
            count, bound, ok = check_sparsity(emb, m0, k, validated=True)
            rows.append([emb.N, emb.d, emb.L, embedding_id, m0, k, count,
                         bound, int(ok)])
    return header, rows


def leaf_boxes_disjoint(emb):
    """Pairwise disjointness of the leaf boxes B(center, 2L)."""
    centers = emb.leaf_centers()
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            delta = tuple(b - a for a, b in zip(centers[i], centers[j]))
            if lattice.linf_norm(delta) <= 4 * emb.L:
                return False
    return True


def neighborhood_count(emb, u, k):
    """|{v in A: v != u, |u-v| <= 6^k*L/2}| for A = union of leaf boxes.

    Returns (count, bound, ok) with bound = (4L+1)^d * 2^(k-1).
    Errors if u is not a point of A.
    """
    if k < 1:
        raise ValueError("defined for k >= 1")
    u = lattice.as_point(u, emb.d)
    pts = np.array(emb.union_points(), dtype=np.int64)
    delta = np.abs(pts - np.array(u, dtype=np.int64)).max(axis=1)
    if not (delta == 0).any():
        raise ValueError(f"{u} is not in the union of leaf boxes")
    thresh = 6 ** k * emb.L / 2.0
    count = int(((delta <= thresh) & (delta > 0)).sum())
    bound = (4 * emb.L + 1) ** emb.d * 2 ** (k - 1)
    return count, bound, count <= bound


def inner_sum_constant(L, d):
    """Largest possible near-field sum: Σ over 0<|z|<=3L of |z|^(2-d)."""
    total = 0.0
    for r in range(1, 3 * L + 1):
        shell = (2 * r + 1) ** d - (2 * r - 1) ** d
        total += shell * r ** (2 - d)
    return total


def pair_sum_constant(L, d):
    """The N-free constant C' with Σ_{u<v in A} |u-v|^(2-d) <= C' * 2^N.

    C'' = C + Σ_{k>=1} (4L+1)^d * 2^k * (6^k L/2)^(2-d) (geometric tail),
    C'  = (4L+1)^d * C''.
    """
    if d < 3:
        raise ValueError("the tail sum only converges for d >= 3")
    C = inner_sum_constant(L, d)
    ratio = 2.0 * 6 ** (2 - d)
    tail = (4 * L + 1) ** d * (L / 2.0) ** (2 - d) * ratio / (1.0 - ratio)
    return (4 * L + 1) ** d * (C + tail)


def pair_sum(emb, chunk=2048):
    """Σ over unordered pairs of distinct A-points of |u-v|^(2-d)."""
    pts = np.array(emb.union_points(), dtype=np.int64)
    n = pts.shape[0]
    total = 0.0
    for a in range(0, n, chunk):
        blk = pts[a:a + chunk]
        b = a + blk.shape[0]
        # within-block pairs (i < j)
        delta = np.abs(blk[:, None, :] - blk[None, :, :]).max(axis=2)
        iu = np.triu_indices(blk.shape[0], k=1)
        vals = delta[iu].astype(np.float64)
        total += float((vals ** (2 - emb.d)).sum())
        # block against every later point
        if b < n:
            delta2 = np.abs(blk[:, None, :] - pts[None, b:, :]).max(axis=2)
            total += float((delta2.astype(np.float64) ** (2 - emb.d)).sum())
    return total


def check_pair_sum(emb):
    """Returns (sum, allowance, ok) for the 2^N-scaled pair-sum bound."""
    s = pair_sum(emb)
    allowance = pair_sum_constant(emb.L, emb.d) * 2 ** emb.N
    return s, allowance, s <= allowance


# ---------------------------------------------------------------------------
# constructive path -> embedding


def is_star_connected(path):
    """Consecutive points at ℓ∞ distance exactly 1."""
    for a, b in zip(path, path[1:]):
        if lattice.linf_norm(tuple(y - x for x, y in zip(a, b))) != 1:
            return False
    return True


def _radii(path_arr, center):
    return np.abs(path_arr - np.array(center, dtype=np.int64)).max(axis=1)


def _point_at_radius(path_arr, center, radius):
    """Some path point at exact ℓ∞ distance `radius` from center.

    Exists whenever the path has points both at distance <= radius and
    >= radius (star-connected steps change the distance by at most 1).
    """
    r = _radii(path_arr, center)
    hits = np.nonzero(r == radius)[0]
    if hits.size == 0:
        return None
    return tuple(int(v) for v in path_arr[hits[0]])


def _snap_to_lattice(p, center, spacing, target_norm):
    """Round p onto center + spacing*Z^d at ℓ∞ distance exactly target_norm.

    p itself sits at distance target_norm from center; each coordinate is
    rounded to the nearest multiple of `spacing`, then the largest-offset
    coordinate is forced to +-target_norm so the norm is exact.  The result
    stays within spacing/2 of p in every coordinate.
    """
    off = [pc - cc for pc, cc in zip(p, center)]
    snapped = [spacing * int(np.floor(o / spacing + 0.5)) for o in off]
    j = int(np.argmax([abs(o) for o in off]))
    snapped[j] = target_norm if off[j] > 0 else -target_norm
    snapped = [min(max(s, -target_norm), target_norm) for s in snapped]
    return tuple(cc + s for cc, s in zip(center, snapped))


def embed_from_path(path, N, L, d=None):
    """Build an embedding whose every leaf annulus is crossed by the path.

    The path must be star-connected and must meet both S(6^N*L - 1) and
    S(2*6^N*L).  Construction: recursively, for a node with center c and
    scale s, pick path points at exact distances s and 2s from c, snap them
    to the child lattice keeping the exact child offset norms, and recurse.
    The returned embedding is re-validated and every leaf annulus crossing
    is re-checked, so a bug in the construction cannot escape silently.
    """
    pts = [lattice.as_point(p, d) for p in path]
    d = len(pts[0])
    if not is_star_connected(pts):
        raise ValueError("path is not star-connected")
    arr = np.array(pts, dtype=np.int64)
    ladder = ScaleLadder(L)
    LN = ladder.scale(N)
    r0 = _radii(arr, (0,) * d)
    if not ((r0 <= LN - 1).any() and (r0 >= 2 * LN).any()):
        raise ValueError("path does not cross the outermost annulus")

    placement = {"": (0,) * d}

    def place_children(m, k):
        if k == N:
            return
        c = placement[m]
        s = ladder.scale(N - k)
        spacing = ladder.scale(N - k - 1)
        for suffix, mult in (("1", 1), ("2", 2)):
            p = _point_at_radius(arr, c, mult * s)
            if p is None:
                raise RuntimeError(
                    f"no path point at distance {mult * s} of node {m!r}; "
                    "the crossing hypothesis should make this impossible")
            placement[m + suffix] = _snap_to_lattice(p, c, spacing, mult * s)
        place_children(m + "1", k + 1)
        place_children(m + "2", k + 1)

    place_children("", 0)
    emb = ProperEmbedding(d=d, L=L, N=N, placement=placement)

    reasons = []
    if not validate_embedding(emb, reasons):
        raise RuntimeError("constructed embedding invalid: " + "; ".join(reasons))
    for m in emb.leaves():
        r = _radii(arr, emb.position(m))
        if not (r == L - 1).any() or not (r == 2 * L).any():
            raise RuntimeError(
                f"leaf {m!r} annulus not crossed by the path (recheck failed)")
    return emb


def random_crossing_path(N, L, d, seed=0, inner_start=True):
    """A random star-connected path crossing the depth-N annulus.

    Starts near the origin and walks with outward drift until it exits
    2*6^N*L; used to exercise embed_from_path.
    """
    rng = mc.generator_for(seed, stream=31)
    ladder = ScaleLadder(L)
    LN = ladder.scale(N)
    pos = np.zeros(d, dtype=np.int64)
    if not inner_start:
        pos[0] = LN - 1
    path = [tuple(int(v) for v in pos)]
    while np.abs(pos).max() < 2 * LN:
        step = rng.integers(-1, 2, size=d)
        while not np.abs(step).max():
            step = rng.integers(-1, 2, size=d)
        # outward drift: occasionally force the dominant coordinate outward
        if rng.random() < 0.6:
            j = int(np.argmax(np.abs(pos)))
            step[j] = 1 if pos[j] >= 0 else -1
        pos = pos + step
        path.append(tuple(int(v) for v in pos))
    return path
