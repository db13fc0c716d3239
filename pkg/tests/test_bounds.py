"""The two pair-product correlation inequalities and their verdicts."""
import numpy as np
import pytest

from voterperc import bounds, coalescence, lattice, measure, mc, percolation

QUICK = coalescence.StoppingPolicy(eps_stop=1e-3, t_max=16.0,
                                   max_events=500_000, check_every=512)


def fake_estimate(lo, hi):
    mid = 0.5 * (lo + hi)
    return mc.EstimateWithCI(mid, 0.5 * (hi - lo), lo, hi, 100)


def test_verdict_composes_cis_conservatively():
    assert bounds._verdict(fake_estimate(0.9, 1.0), 1.0, 1.2) == "pass"
    assert bounds._verdict(fake_estimate(1.3, 1.4), 1.0, 1.2) == "fail"
    assert bounds._verdict(fake_estimate(1.1, 1.3), 1.0, 1.2) == "inconclusive"
    assert bounds._verdict(fake_estimate(0.9, 1.1), 1.0, 1.2) == "inconclusive"


def test_canonical_separation():
    assert bounds._canonical_sep((-3, 0, 1)) == (0, 1, 3)
    assert bounds._canonical_sep((2, -2, 2)) == (2, 2, 2)


def test_single_walker_gives_exact_equality():
    rep = bounds.check_merge_moment([(0, 0, 0)], R=2, beta=0.5, n=10)
    assert rep.verdict == "pass"
    assert rep.lhs.value == rep.rhs_lo == rep.rhs_hi == 1.0
    assert rep.margin == 0.0


def test_pair_lhs_matches_merge_count_replay():
    A = [(0, 0, 0), (3, 0, 0)]
    beta, n, seed = 0.5, 2000, 6
    rep = bounds.check_merge_moment(A, R=2, beta=beta, n=n, seed=seed,
                                    policy=QUICK)
    absorbed, _, _, _ = coalescence.batch_merge_counts(
        [lattice.as_point(p) for p in A], R=2, n=n, seed=seed, policy=QUICK)
    assert set(np.unique(absorbed)) <= {0, 1}
    p_hat = absorbed.mean()
    assert np.isclose(rep.lhs.value, 1.0 + p_hat * (1.0 / beta - 1.0),
                      rtol=1e-12)
    assert rep.verdict in ("pass", "inconclusive")
    assert np.isclose(rep.margin, rep.rhs_lo - rep.lhs.ci_hi)


def test_reports_are_reproducible():
    kw = dict(R=2, beta=0.4, n=800, seed=9, policy=QUICK)
    rep1 = bounds.check_merge_moment([(0, 0, 0), (1, 3, 0)], **kw)
    rep2 = bounds.check_merge_moment([(0, 0, 0), (1, 3, 0)], **kw)
    assert rep1.to_payload() == rep2.to_payload()


def test_meet_table_is_cached_per_geometry():
    t1 = bounds._meet_table(3, 2, 3)
    t2 = bounds._meet_table(3, 2, 3)
    assert t1 is t2


def test_beta_validation():
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            bounds.check_merge_moment([(0, 0, 0), (1, 0, 0)], beta=bad, n=10)


def test_beta_near_one_is_never_a_fail():
    # beta -> 1 sends both sides to 1, so the check must stay comfortable
    rep = bounds.check_merge_moment([(0, 0, 0), (0, 3, 0)], R=2, beta=0.99,
                                    n=1000, seed=3, policy=QUICK)
    assert rep.verdict != "fail"
    assert rep.lhs.value < 1.01


def test_product_rhs_monotone_in_meet_bounds():
    seps = [(1, 0, 0), (2, 0, 0)]
    meet = {(0, 0, 1): (0.1, 0.2), (0, 0, 2): (0.05, 0.1)}
    lo, hi = bounds.product_rhs(seps, meet, 3.0)
    assert np.isclose(lo, (1 + 0.3) * (1 + 0.15))
    assert np.isclose(hi, (1 + 0.6) * (1 + 0.3))
    fatter = {(0, 0, 1): (0.1, 0.4), (0, 0, 2): (0.05, 0.1)}
    lo2, hi2 = bounds.product_rhs(seps, fatter, 3.0)
    assert lo2 == lo and hi2 > hi


def test_pairwise_meet_bounds_table_and_envelope():
    out = bounds.pairwise_meet_bounds(3, 4, [(1, 0, 0), (16, 0, 0)])
    near = out[(0, 0, 1)]
    far = out[(0, 0, 16)]
    assert 0.0 <= near[0] <= near[1] <= 1.0
    assert near[0] > 0.0
    assert far[0] == 0.0                       # beyond the tabulated box
    assert 0.0 < far[1] < 1.0
    assert far[1] < near[1]
    with pytest.raises(ValueError):
        bounds.pairwise_meet_bounds(3, 4, [(1, 0, 0), (0, 0, 0)])


def test_exact_pi_alpha_routes():
    e1 = (1, 0, 0)
    cyl = measure.CylinderEvent({(0, 0, 0): 1, e1: 0})
    assert np.isclose(bounds.exact_pi_alpha(cyl, 0.3), 0.3 * 0.7)
    maj = measure.PredicateEvent(
        [(0, 0, 0), e1, (0, 1, 0)],
        lambda a: sum(a.values()) >= 2, name="majority")
    assert np.isclose(bounds.exact_pi_alpha(maj, 0.5), 0.5)
    ev = percolation.AnnulusCrossingEvent(3, 1, 3)
    with pytest.raises(ValueError):               # 343-point base
        bounds.exact_pi_alpha(ev, 0.4)


def test_small_crossing_event_enumeration_matches_mc():
    ev = percolation.AnnulusCrossingEvent(2, 0, 1)
    exact = bounds.exact_pi_alpha(ev, 0.6)
    est = ev.pi_reference(0.6, n=4000, seed=2)
    assert est.ci_lo - 0.01 <= exact <= est.ci_hi + 0.01


def test_disjoint_translates_small_run():
    ev = measure.CylinderEvent({(0, 0, 0): 1})
    rep = bounds.check_disjoint_translates(
        [(0, 0, 0)], ev, [(0, 0, 0), (3, 0, 0)], alpha=0.5, R=2,
        n_samples=1500, seed=4, policy=QUICK)
    assert rep.kind == "disjoint_translates"
    assert rep.verdict in ("pass", "inconclusive")
    assert any("computed exactly" in s for s in rep.notes)
    assert rep.params["n_translates"] == 2
    assert 0.0 < rep.lhs.value < 1.0
    assert np.isclose(rep.margin, rep.rhs_lo - rep.lhs.ci_hi)


def test_disjoint_translates_validation():
    ev = measure.CylinderEvent({(0, 0, 0): 1})
    with pytest.raises(ValueError):            # origin missing from the window
        bounds.check_disjoint_translates([(1, 0, 0)], ev, [(0, 0, 0)], 0.5)
    off_base = measure.CylinderEvent({(5, 5, 5): 1})
    with pytest.raises(ValueError):            # event base outside the window
        bounds.check_disjoint_translates([(0, 0, 0)], off_base,
                                         [(0, 0, 0)], 0.5)
    wide = [lattice.as_point(p) for p in
            ((0, 0, 0), (1, 0, 0))]
    with pytest.raises(ValueError):            # overlapping translates
        bounds.check_disjoint_translates(wide, ev,
                                         [(0, 0, 0), (1, 0, 0)], 0.5)


def test_default_battery_composition():
    sets = bounds.default_battery()
    assert len(sets) >= 20
    kinds = {k for k, _ in sets}
    assert kinds == {"merge_moment", "disjoint_translates"}
    with pytest.raises(ValueError):
        bounds.run_battery([("nonsense", {})], n=10)


def test_battery_csv_round_trip(tmp_path):
    reps = [bounds.check_merge_moment([(0, 0, 0)], beta=0.5, n=10),
            bounds.check_merge_moment([(0, 0, 0)], beta=0.3, n=10)]
    path = tmp_path / "battery.csv"
    bounds.battery_csv(path, reps, comments=["smoke"])
    from voterperc import io
    comments, header, rows = io.read_csv(path)
    assert header == ["kind", "params", "lhs", "lhs_ci_lo", "lhs_ci_hi",
                      "rhs_lo", "rhs_hi", "margin", "verdict", "n", "seed"]
    assert len(rows) == 2
    assert all(r[8] == "pass" for r in rows)
