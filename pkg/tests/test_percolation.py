"""Cluster labeling, crossing queries, and the spanning-cluster event."""
import numpy as np
import pytest

import oracles
from voterperc import lattice, measure, percolation


def grid_field(rows, origin=None):
    """Small hand-built fields from nested lists (row-major)."""
    arr = np.asarray(rows, dtype=np.uint8)
    if origin is None:
        origin = (0,) * arr.ndim
    return measure.FieldSample(arr.ndim, arr.ravel(), origin=origin,
                               dims=arr.shape)


def test_adjacency_offsets_counts():
    assert percolation.adjacency_offsets(3, "nn").shape == (6, 3)
    assert percolation.adjacency_offsets(3, "linf").shape == (26, 3)
    assert percolation.adjacency_offsets(2, "nn").shape == (4, 2)
    assert percolation.adjacency_offsets(2, "linf").shape == (8, 2)
    offs = percolation.adjacency_offsets(3, "linf")
    assert len({tuple(o) for o in offs}) == offs.shape[0]
    assert not (offs == 0).all(axis=1).any()
    with pytest.raises(ValueError):
        percolation.adjacency_offsets(3, "knight")


@pytest.mark.parametrize("adjacency", ["nn", "linf"])
@pytest.mark.parametrize("seed,alpha", [(0, 0.3), (1, 0.55), (2, 0.75)])
def test_labeling_matches_bfs_oracle(adjacency, seed, alpha):
    fld = measure.sample_bernoulli(3, alpha, ((0, 0, 0), 3), seed=seed)
    lab = percolation.label_clusters(fld, adjacency=adjacency)
    want = oracles.bfs_partition(fld, adjacency=adjacency)
    assert oracles.labeling_as_partition(lab) == want
    assert sorted(lab.sizes) == sorted(len(c) for c in want)
    assert lab.n_clusters == len(want)


def test_labeling_of_zero_sites():
    fld = measure.sample_bernoulli(3, 0.6, ((0, 0, 0), 3), seed=7)
    lab = percolation.label_clusters(fld, value=0, adjacency="nn")
    assert (oracles.labeling_as_partition(lab)
            == oracles.bfs_partition(fld, value=0, adjacency="nn"))


def test_labeling_hand_built():
    fld = grid_field([[1, 1, 0, 0, 0],
                      [0, 0, 0, 1, 0],
                      [0, 1, 0, 1, 0],
                      [0, 1, 0, 0, 0],
                      [0, 0, 0, 0, 1]], origin=(-2, -2))
    lab = percolation.label_clusters(fld, adjacency="nn")
    assert lab.n_clusters == 4
    assert lab.max_size == 2
    assert sorted(lab.sizes) == [1, 2, 2, 2]
    assert lab.label_of((-2, -2)) == lab.label_of((-2, -1))
    assert lab.label_of((-1, 1)) == lab.label_of((0, 1))
    assert lab.label_of((-1, 1)) != lab.label_of((0, -1))
    assert lab.label_of((0, 0)) == -1          # closed site
    with pytest.raises(KeyError):
        lab.label_of((3, 3))
    # the two vertical bars sit two columns apart, so even the linf
    # adjacency keeps all four clusters separate
    lab8 = percolation.label_clusters(fld, adjacency="linf")
    assert lab8.label_of((2, 2)) != lab8.label_of((0, 1))
    assert (oracles.labeling_as_partition(lab8)
            == oracles.bfs_partition(fld, adjacency="linf"))


def test_extents_and_face_spanning():
    row = [[0] * 5, [0] * 5, [1] * 5, [0] * 5, [0] * 5]
    lab = percolation.label_clusters(grid_field(row))
    assert lab.n_clusters == 1
    assert lab.extents()[0] == 4
    assert not lab.spans_all_faces()[0]
    cross = [[0, 0, 1, 0, 0],
             [0, 0, 1, 0, 0],
             [1, 1, 1, 1, 1],
             [0, 0, 1, 0, 0],
             [0, 0, 1, 0, 0]]
    lab = percolation.label_clusters(grid_field(cross))
    assert lab.n_clusters == 1
    assert lab.spans_all_faces()[0]
    empty = percolation.label_clusters(grid_field([[0, 0], [0, 0]]))
    assert empty.n_clusters == 0
    assert empty.max_size == 0
    assert empty.extents().size == 0


def test_crossing_sees_diagonals_only_under_linf():
    diag = np.eye(5, dtype=np.uint8)
    fld = measure.FieldSample(2, diag.ravel(), origin=(-2, -2), dims=(5, 5))
    q = percolation.CrossingQuery(region_a=lattice.BoxSpec((-2, -2), 0),
                                  region_b=lattice.BoxSpec((2, 2), 0),
                                  adjacency="linf")
    assert percolation.crossing(fld, q)
    q_nn = percolation.CrossingQuery(region_a=q.region_a, region_b=q.region_b,
                                     adjacency="nn")
    assert not percolation.crossing(fld, q_nn)


def test_crossing_monotone_in_open_sites():
    query = percolation.annulus_crossing_query(2, 1, 3)
    rng = np.random.default_rng(11)
    for _ in range(25):
        vals = (rng.random(49) < 0.45).astype(np.uint8)
        fld = measure.FieldSample(2, vals, origin=(-3, -3), dims=(7, 7))
        extra = np.maximum(vals, (rng.random(49) < 0.2).astype(np.uint8))
        fatter = measure.FieldSample(2, extra, origin=(-3, -3), dims=(7, 7))
        before = percolation.crossing(fld, query)
        after = percolation.crossing(fatter, query)
        assert after or not before


def test_crossing_needs_grid_layout():
    pts = [(0, 0, 0), (1, 0, 0)]
    fld = measure.FieldSample(3, [1, 1], points_list=pts)
    with pytest.raises(ValueError):
        percolation.crossing(fld, percolation.annulus_crossing_query(3, 0, 1))


def test_annulus_event_matches_crossing_query():
    ev = percolation.AnnulusCrossingEvent(3, 1, 3)
    query = percolation.annulus_crossing_query(3, 1, 3)
    assert len(ev.base) == 7 ** 3
    for seed in range(15):
        fld = measure.sample_bernoulli(3, 0.4, ((0, 0, 0), 3), seed=seed)
        got = ev.occurs(fld)
        assert got == ev.occurs_values(fld.values)
        assert got == percolation.crossing(fld, query)


def test_annulus_event_shift_translates_the_window():
    ev = percolation.AnnulusCrossingEvent(2, 1, 2)
    moved = ev.shift((5, -3))
    assert moved.center == (5, -3)
    assert set(moved.base) == {(p[0] + 5, p[1] - 3) for p in ev.base}
    fld = measure.sample_bernoulli(2, 0.5, ((0, 0), 2), seed=3)
    assert moved.occurs(fld.shifted((5, -3))) == ev.occurs(fld)


def test_annulus_event_validation():
    with pytest.raises(ValueError):
        percolation.AnnulusCrossingEvent(3, 3, 3)
    with pytest.raises(ValueError):
        percolation.AnnulusCrossingEvent(3, -1, 2)


def test_annulus_event_reference_probability():
    ev = percolation.AnnulusCrossingEvent(2, 0, 2)
    est = ev.pi_reference(0.7, n=500, seed=12)
    again = ev.pi_reference(0.7, n=500, seed=12)
    assert est.value == again.value
    assert 0.0 <= est.ci_lo <= est.value <= est.ci_hi <= 1.0
    assert ev.prob_product(0.7, n=500, seed=12) == est.value
    # degenerate densities pin the crossing probability
    assert ev.pi_reference(1.0, n=50, seed=1).value == 1.0
    assert ev.pi_reference(0.0, n=50, seed=1).value == 0.0


def test_detect_EM_full_and_empty_windows():
    side = 7
    full = grid_field(np.ones((side,) * 3, dtype=np.uint8), origin=(-3,) * 3)
    occ, det = percolation.detect_EM(full)
    assert occ
    assert det["M"] == 3 and det["n_big"] == 1
    assert det["max_extent"] == side - 1
    assert det["spanning_id"] is not None
    empty = grid_field(np.zeros((side,) * 3, dtype=np.uint8), origin=(-3,) * 3)
    occ, det = percolation.detect_EM(empty)
    assert not occ
    assert det["n_big"] == 0 and det["n_clusters"] == 0


def test_detect_EM_requires_unique_spanning_cluster():
    two_rows = np.zeros((7, 7), dtype=np.uint8)
    two_rows[1, :] = 1
    two_rows[5, :] = 1
    occ, det = percolation.detect_EM(grid_field(two_rows, origin=(-3, -3)))
    assert not occ and det["n_big"] == 2
    one_row = np.zeros((7, 7), dtype=np.uint8)
    one_row[1, :] = 1
    occ, det = percolation.detect_EM(grid_field(one_row, origin=(-3, -3)))
    assert not occ                      # long but pinned to one slab
    assert det["n_big"] == 1 and det["spanning_id"] is None
    cross = np.zeros((7, 7), dtype=np.uint8)
    cross[3, :] = 1
    cross[:, 3] = 1
    occ, det = percolation.detect_EM(grid_field(cross, origin=(-3, -3)))
    assert occ and det["spanning_id"] is not None


def test_detect_EM_window_validation():
    with pytest.raises(ValueError):        # even side, M not inferable
        percolation.detect_EM(grid_field(np.ones((4, 4), dtype=np.uint8)))
    with pytest.raises(ValueError):        # not a cube
        percolation.detect_EM(grid_field(np.ones((3, 5), dtype=np.uint8)))
    pts_fld = measure.FieldSample(2, [1], points_list=[(0, 0)])
    with pytest.raises(ValueError):
        percolation.detect_EM(pts_fld)


def test_coarse_grain_of_saturated_field():
    M, cr = 2, 1
    fine = grid_field(np.ones((9, 9), dtype=np.uint8), origin=(-4, -4))
    coarse = percolation.coarse_grain(fine, M, cr)
    assert coarse.dims == (3, 3)
    assert coarse.origin == (-cr, -cr)
    assert (coarse.values == 1).all()
    assert coarse.provenance["coarse_grained"] and coarse.provenance["M"] == M
    small = grid_field(np.ones((5, 5), dtype=np.uint8), origin=(-2, -2))
    with pytest.raises(ValueError):        # sub-window would leave the field
        percolation.coarse_grain(small, M, cr)


def test_cluster_stats_rows_shape():
    labs = [percolation.label_clusters(
        measure.sample_bernoulli(3, 0.5, ((0, 0, 0), 2), seed=s))
        for s in (0, 1)]
    header, rows = percolation.cluster_stats_rows(labs)
    assert header == ["field_id", "adjacency", "n_clusters", "max_size",
                      "spans_faces"]
    assert len(rows) == 2 and all(len(r) == 5 for r in rows)
