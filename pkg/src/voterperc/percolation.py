"""Site percolation machinery on sampled fields.

Conventions (used verbatim by the spanning/crossing checks):

* adjacency "nn"   = the 2d unit steps (ℓ1 distance 1);
  adjacency "linf" = all 3^d - 1 offsets with ℓ∞ norm 1.
* a path is a sequence of window sites carrying the queried value, each
  consecutive pair adjacent;
* a crossing from region A to region B exists when some such path starts at
  a site adjacent to a point of A and ends at a site adjacent to a point of
  B.  The path itself need not enter A or B, and the regions may lie partly
  or wholly outside the sampled window (e.g. the complement of a box) — only
  their dilations intersected with the window matter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, lattice, measure


def adjacency_offsets(d, adjacency="nn"):
    if adjacency == "nn":
        pts = [tuple(p) for p in lattice.sphere_points(1, d)
               if lattice.l1_norm(p) == 1]
    elif adjacency == "linf":
        pts = [tuple(p) for p in lattice.sphere_points(1, d)]
    else:
        raise ValueError(f"unknown adjacency {adjacency!r}")
    return np.array(sorted(pts), dtype=np.int64)


@dataclass
class ClusterLabeling:
    """Connected components of the sites carrying `value` in a grid field."""
    field: measure.FieldSample
    adjacency: str
    value: int
    labels: np.ndarray          # flat, -1 off-cluster, else root flat index
    ids: np.ndarray             # distinct root indices, sorted
    sizes: np.ndarray
    bbox_min: np.ndarray        # (n_clusters, d) window-relative coords
    bbox_max: np.ndarray

    @property
    def n_clusters(self):
        return int(self.ids.size)

    @property
    def max_size(self):
        return int(self.sizes.max()) if self.ids.size else 0

    def extents(self):
        """ℓ∞ diameter of each cluster = largest per-coordinate extent."""
        if not self.ids.size:
            return np.zeros(0, dtype=np.int64)
        return (self.bbox_max - self.bbox_min).max(axis=1)

    def spans_all_faces(self):
        """Per cluster: touches every face of the window box."""
        dims = np.array(self.field.dims, dtype=np.int64)
        if not self.ids.size:
            return np.zeros(0, dtype=bool)
        return ((self.bbox_min == 0).all(axis=1)
                & (self.bbox_max == dims - 1).all(axis=1))

    def label_of(self, p):
        p = lattice.as_point(p, self.field.d)
        idx = 0
        for c, o, s in zip(p, self.field.origin, self.field.dims):
            off = c - o
            if not 0 <= off < s:
                raise KeyError(f"{p} outside window")
            idx = idx * s + off
        return int(self.labels[idx])


def label_clusters(fld, value=1, adjacency="nn"):
    """Union-find component labeling of the `value` sites of a grid field."""
    if not fld.is_grid:
        raise ValueError("cluster labeling needs a grid-layout field")
    mask = (fld.values == value).astype(np.uint8)
    dims = np.array(fld.dims, dtype=np.int64)
    offs = adjacency_offsets(fld.d, adjacency)
    labels = _kernels.label_grid(mask, dims, offs)
    on = labels >= 0
    if on.any():
        ids, inv = np.unique(labels[on], return_inverse=True)
        sizes = np.bincount(inv)
        coords = np.stack(np.unravel_index(np.nonzero(on)[0], fld.dims), axis=1)
        bbox_min = np.full((ids.size, fld.d), np.iinfo(np.int64).max)
        bbox_max = np.full((ids.size, fld.d), np.iinfo(np.int64).min)
        np.minimum.at(bbox_min, inv, coords)
        np.maximum.at(bbox_max, inv, coords)
    else:
        ids = np.zeros(0, dtype=np.int64)
        sizes = np.zeros(0, dtype=np.int64)
        bbox_min = np.zeros((0, fld.d), dtype=np.int64)
        bbox_max = np.zeros((0, fld.d), dtype=np.int64)
    return ClusterLabeling(field=fld, adjacency=adjacency, value=value,
                           labels=labels, ids=ids, sizes=sizes,
                           bbox_min=bbox_min, bbox_max=bbox_max)


# ---------------------------------------------------------------------------
# regions and crossings


def region_contains(spec, coords):
    """Vectorized containment test: coords is (N, d) absolute positions."""
    if isinstance(spec, lattice.BoxSpec):
        delta = np.abs(coords - np.array(spec.center, dtype=np.int64))
        if spec.norm == "linf":
            return delta.max(axis=1) <= spec.radius
        return delta.sum(axis=1) <= spec.radius
    if isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "complement":
        return ~region_contains(spec[1], coords)
    if callable(spec):
        return np.array([bool(spec(tuple(int(v) for v in row)))
                         for row in coords])
    pts = {lattice.as_point(p) for p in spec}
    return np.array([tuple(int(v) for v in row) in pts for row in coords])


@dataclass(frozen=True)
class CrossingQuery:
    """A crossing question: from region_a to region_b through `value` sites."""
    region_a: object
    region_b: object
    value: int = 1
    adjacency: str = "nn"


def _window_coords(fld):
    idx = np.indices(fld.dims).reshape(fld.d, -1).T
    return idx + np.array(fld.origin, dtype=np.int64)


def _dilation_mask(fld, spec, offs):
    """Window sites adjacent (by some offset) to a point of the region."""
    coords = _window_coords(fld)
    out = np.zeros(coords.shape[0], dtype=bool)
    for o in offs:
        out |= region_contains(spec, coords + o)
    return out.astype(np.uint8)


def crossing(fld, query):
    """Evaluate a CrossingQuery on a grid field.  Returns bool."""
    if not fld.is_grid:
        raise ValueError("crossing queries need a grid-layout field")
    offs = adjacency_offsets(fld.d, query.adjacency)
    good = (fld.values == query.value).astype(np.uint8)
    seeds = _dilation_mask(fld, query.region_a, offs)
    targets = _dilation_mask(fld, query.region_b, offs)
    dims = np.array(fld.dims, dtype=np.int64)
    return bool(_kernels.crossing_bfs(good, seeds, targets, dims, offs))


def annulus_crossing_query(d, inner, outer, value=1, adjacency="nn"):
    """Crossing from B(inner) to the complement of B(outer), both centered."""
    a = lattice.BoxSpec((0,) * d, inner)
    b = ("complement", lattice.BoxSpec((0,) * d, outer))
    return CrossingQuery(region_a=a, region_b=b, value=value,
                         adjacency=adjacency)


class AnnulusCrossingEvent:
    """The annulus crossing as a reusable window event.

    Base window = B(center, outer); occurs when the `value` sites of the
    window connect a neighbor of B(center, inner) to a neighbor of the
    complement of B(center, outer).  Masks are precomputed once, so
    `occurs_values` costs a single compiled BFS; `base` and `shift` make it
    pluggable wherever a cylinder-style event is accepted.
    """

    def __init__(self, d, inner, outer, value=1, adjacency="nn", center=None):
        if not 0 <= inner < outer:
            raise ValueError("need 0 <= inner < outer")
        self.d = d
        self.inner = inner
        self.outer = outer
        self.value = value
        self.adjacency = adjacency
        self.center = lattice.as_point(center if center is not None
                                       else (0,) * d, d)
        self._offs = adjacency_offsets(d, adjacency)
        self._dims = np.array((2 * outer + 1,) * d, dtype=np.int64)
        # masks over the canonical centered box (translation invariant)
        ref = measure.FieldSample(
            d, np.zeros((2 * outer + 1) ** d, dtype=np.uint8),
            origin=(-outer,) * d, dims=(2 * outer + 1,) * d)
        self._seeds = _dilation_mask(
            ref, lattice.BoxSpec((0,) * d, inner), self._offs)
        self._targets = _dilation_mask(
            ref, ("complement", lattice.BoxSpec((0,) * d, outer)), self._offs)

    @property
    def base(self):
        return tuple(tuple(int(c) for c in row)
                     for row in lattice.box_points(self.center, self.outer))

    @property
    def base_points(self):
        return self.base

    def shift(self, x):
        return AnnulusCrossingEvent(
            self.d, self.inner, self.outer, value=self.value,
            adjacency=self.adjacency,
            center=tuple(c + xi for c, xi in zip(self.center, x)))

    def occurs_values(self, flat_values):
        """Evaluate on values listed in base (= box_points) order."""
        good = (np.asarray(flat_values).ravel() == self.value).astype(np.uint8)
        return bool(_kernels.crossing_bfs(good, self._seeds, self._targets,
                                          self._dims, self._offs))

    def occurs(self, field):
        vals = np.array([field.value_at(p) for p in self.base],
                        dtype=np.uint8)
        return self.occurs_values(vals)

    def prob_product(self, alpha, n=20_000, seed=404):
        """Monte-Carlo probability under the iid Bernoulli(alpha) law.

        The base window has more sites than exact enumeration can handle, so
        this is an estimate; use `pi_reference` when the CI is needed.
        """
        return self.pi_reference(alpha, n=n, seed=seed).value

    def pi_reference(self, alpha, n=20_000, seed=404, level=None):
        import voterperc.mc as _mc
        lvl = _mc.DEFAULT_LEVEL if level is None else level
        rng = _mc.generator_for(seed, stream=33)
        m = len(self._seeds)
        hits = 0
        for _ in range(n):
            vals = (rng.random(m) < alpha).astype(np.uint8)
            if self.occurs_values(vals):
                hits += 1
        return _mc.proportion_estimate(hits, n, level=lvl, alpha=alpha,
                                       inner=self.inner, outer=self.outer)


# ---------------------------------------------------------------------------
# spanning-cluster event and coarse graining


def detect_EM(fld, M=None, value=1, adjacency="nn"):
    """The spanning-cluster event on a window box of radius M.

    Occurs when exactly one `value` cluster has ℓ∞ diameter >= M and that
    cluster touches all 2d faces of the window.  Returns (occurs, details).
    """
    if not fld.is_grid:
        raise ValueError("spanning-cluster detection needs a grid field")
    sides = set(fld.dims)
    if len(sides) != 1:
        raise ValueError("window must be a cube")
    side = sides.pop()
    if M is None:
        if side % 2 == 0:
            raise ValueError("cannot infer M from an even-sided window")
        M = (side - 1) // 2
    lab = label_clusters(fld, value=value, adjacency=adjacency)
    ext = lab.extents()
    big = np.nonzero(ext >= M)[0]
    occurs = False
    spanning_id = None
    if big.size == 1:
        k = int(big[0])
        if bool(lab.spans_all_faces()[k]):
            occurs = True
            spanning_id = int(lab.ids[k])
    details = {"M": int(M), "n_big": int(big.size),
               "n_clusters": lab.n_clusters, "max_extent":
               int(ext.max()) if ext.size else 0, "spanning_id": spanning_id}
    return occurs, details


def coarse_grain(fld, M, coarse_radius, value=1, adjacency="nn"):
    """Renormalized field: coarse site x is open iff the spanning-cluster
    event holds on the sub-window M*x + B(M) of `fld`.

    Adjacent coarse boxes overlap in a slab of thickness M+1, which is what
    makes open coarse paths glue into one fine cluster.
    """
    if not fld.is_grid:
        raise ValueError("coarse graining needs a grid field")
    grid = fld.grid()
    vals = []
    coarse_pts = lattice.box_points((0,) * fld.d, coarse_radius)
    for x in coarse_pts:
        lo = [M * c - M - o for c, o in zip(x, fld.origin)]
        hi = [l + 2 * M + 1 for l in lo]
        if any(l < 0 or h > s for l, h, s in zip(lo, hi, fld.dims)):
            raise ValueError(f"sub-window for coarse site {x} leaves the field")
        sub = grid[tuple(slice(l, h) for l, h in zip(lo, hi))]
        subfld = measure.FieldSample(
            fld.d, np.ascontiguousarray(sub).ravel(),
            origin=tuple(M * c - M for c in x), dims=(2 * M + 1,) * fld.d,
            provenance=dict(fld.provenance, coarse_site=list(x)))
        occ, _ = detect_EM(subfld, M=M, value=value, adjacency=adjacency)
        vals.append(1 if occ else 0)
    return measure.FieldSample(
        fld.d, np.array(vals, dtype=np.uint8),
        origin=(-coarse_radius,) * fld.d, dims=(2 * coarse_radius + 1,) * fld.d,
        provenance=dict(fld.provenance, coarse_grained=True, M=int(M)))


def cluster_stats_rows(labelings):
    """CSV-ready rows: field id, adjacency, n_clusters, max_size, spans_faces."""
    header = ["field_id", "adjacency", "n_clusters", "max_size", "spans_faces"]
    rows = []
    for i, lab in enumerate(labelings):
        fid = lab.field.provenance.get("seed", i)
        rows.append([fid, lab.adjacency, lab.n_clusters, lab.max_size,
                     int(lab.spans_all_faces().any())])
    return header, rows
