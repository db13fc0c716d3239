"""Window samplers and event estimators for the stationary field."""
import numpy as np
import pytest

from voterperc import coalescence, lattice, measure, mc

QUICK = coalescence.StoppingPolicy(eps_stop=1e-3, t_max=32.0,
                                   max_events=500_000, check_every=1024)
ALPHA = 0.35


def test_sample_mu_layout_and_determinism():
    fld = measure.sample_mu(3, 1, 0.5, ((0, 0, 0), 2), seed=4, policy=QUICK)
    assert fld.is_grid and fld.dims == (5, 5, 5)
    assert fld.values.size == 125
    assert set(np.unique(fld.values)) <= {0, 1}
    again = measure.sample_mu(3, 1, 0.5, ((0, 0, 0), 2), seed=4, policy=QUICK)
    assert (fld.values == again.values).all()
    other = measure.sample_mu(3, 1, 0.5, ((0, 0, 0), 2), seed=5, policy=QUICK)
    assert (fld.values != other.values).any()
    for key in ("sampler", "eps_stop", "t_max", "achieved_qsum", "stop_reason"):
        assert key in fld.provenance


def test_sample_mu_single_site_marginal_is_exact():
    # the one-point marginal equals the block density at every horizon,
    # even one as crude as this
    crude = coalescence.StoppingPolicy(eps_stop=1e-3, t_max=0.5,
                                       max_events=10_000)
    hits = 0
    n = 4000
    for k in range(n):
        fld = measure.sample_mu(3, 1, ALPHA, [(0, 0, 0)], seed=k, policy=crude)
        hits += int(fld.values[0])
    est = mc.proportion_estimate(hits, n)
    assert est.ci_lo <= ALPHA <= est.ci_hi


def test_estimate_density_agrees_with_alpha():
    est = measure.estimate_density(3, 1, ALPHA, ((0, 0, 0), 2), n=400,
                                   seed=2, policy=QUICK)
    assert abs(est.value - ALPHA) < 4 * est.stderr


def test_bernoulli_sampler_matches_product_law():
    fld = measure.sample_bernoulli(3, 0.5, ((0, 0, 0), 4), seed=1)
    assert fld.values.size == 9 ** 3
    assert abs(fld.density() - 0.5) < 0.06
    # two-point product check at a few separations
    grid = fld.grid()
    a = grid[:-1, :, :] * grid[1:, :, :]
    assert abs(a.mean() - 0.25) < 0.05


def test_covariance_positive_and_route_consistent():
    cov = measure.estimate_covariance(3, 1, 0.5, (0, 0, 0), (1, 0, 0),
                                      n=4000, seed=3, policy=QUICK)
    # cov = alpha(1-alpha) * P(merge); both factors are known here
    p = cov.meta["merge_prob"]
    assert cov.value == pytest.approx(0.25 * p)
    assert 0.0 < p < 1.0
    # adjacent sites are positively correlated, far sites nearly uncorrelated
    far = measure.estimate_covariance(3, 1, 0.5, (0, 0, 0), (9, 0, 0),
                                      n=4000, seed=3, policy=QUICK)
    assert cov.value > far.value


def test_pair_law_tv_is_twice_scaled_merge_prob():
    tv = measure.pair_law_tv(3, 1, 0.5, (0, 0, 0), (1, 0, 0), n=3000,
                             seed=6, policy=QUICK)
    assert tv.value == pytest.approx(2 * 0.25 * tv.meta["merge_prob"])
    assert 0.0 <= tv.value <= 1.0


def test_flip_symmetry_of_density():
    # swapping the roles of 0 and 1 mirrors the density
    lo = measure.estimate_density(3, 1, 0.2, ((0, 0, 0), 1), n=600, seed=8,
                                  policy=QUICK)
    hi = measure.estimate_density(3, 1, 0.8, ((0, 0, 0), 1), n=600, seed=9,
                                  policy=QUICK)
    se = float(np.hypot(lo.stderr, hi.stderr))
    assert abs((1.0 - hi.value) - lo.value) < 4 * se


def test_finite_time_sampler_tracks_torus_dynamics():
    # same finite horizon, two unrelated routes
    t = 3.0
    n = 1500
    alpha = 0.5
    dual_one = 0
    dual_pair = 0
    for k in range(n):
        fld = measure.sample_mu_finite_time(3, 1, alpha, [(0, 0, 0), (1, 0, 0)],
                                            t, seed=k)
        dual_one += fld.value_at((0, 0, 0))
        dual_pair += fld.value_at((0, 0, 0)) * fld.value_at((1, 0, 0))
    torus_one = 0
    torus_pair = 0
    m = 300
    for k in range(m):
        fld = measure.sample_voter_torus(3, 1, alpha, 16, t, seed=7000 + k)
        g = fld.grid()
        torus_one += g.mean()
        torus_pair += (g * np.roll(g, -1, axis=0)).mean()
    e_one = mc.proportion_estimate(dual_one, n)
    e_pair = mc.proportion_estimate(dual_pair, n)
    assert abs(e_one.value - torus_one / m) < 5 * e_one.stderr + 0.02
    assert abs(e_pair.value - torus_pair / m) < 5 * e_pair.stderr + 0.02


def test_cylinder_event_machinery():
    ev = measure.CylinderEvent({(0, 0, 0): 1, (1, 0, 0): 0})
    assert ev.prob_product(0.3) == pytest.approx(0.3 * 0.7)
    shifted = ev.shift((0, 1, 0))
    assert shifted.base == ((0, 1, 0), (1, 1, 0))
    fld = measure.sample_bernoulli(3, 0.5, ((0, 0, 0), 2), seed=2)
    assert ev.occurs(fld) in (True, False)
    with pytest.raises(ValueError):
        measure.CylinderEvent({})


def test_predicate_event_prob_product_enumeration():
    base = [(0, 0, 0), (1, 0, 0), (2, 0, 0)]
    ev = measure.PredicateEvent(base, lambda a: sum(a.values()) >= 2,
                                name="majority")
    # binomial(3, alpha) >= 2
    alpha = 0.4
    want = 3 * alpha ** 2 * (1 - alpha) + alpha ** 3
    assert ev.prob_product(alpha) == pytest.approx(want)


def test_intersect_shifted_requires_disjoint_bases():
    ev = measure.CylinderEvent({(0, 0, 0): 1})
    joint = measure.intersect_shifted(ev, [(0, 0, 0), (3, 0, 0)])
    assert len(joint.base) == 2
    with pytest.raises(ValueError):
        measure.intersect_shifted(ev, [(0, 0, 0), (0, 0, 0)])


def test_estimate_event_prob_on_product_field():
    ev = measure.CylinderEvent({(0, 0, 0): 1, (2, 0, 0): 1})
    def sampler(seed):
        return measure.sample_bernoulli(3, 0.6, ((0, 0, 0), 2), seed=seed)
    est = measure.estimate_event_prob(sampler, ev, n=3000, seed=10)
    assert abs(est.value - 0.36) < 4 * est.stderr + 0.005


def test_check_local_bernoulli_near_product_for_large_R():
    rep = measure.check_local_bernoulli(3, 12, 0.5, [(0, 0, 0), (1, 0, 0)],
                                        n=4000, seed=11, policy=QUICK)
    assert rep["tv"] < 0.05
    assert rep["n"] == 4000
    assert len(rep["patterns"]) == 4
    assert sum(v["count"] for v in rep["patterns"].values()) == 4000


def test_field_sample_round_trip(tmp_path):
    fld = measure.sample_mu(3, 2, 0.45, ((1, 1, 1), 2), seed=12, policy=QUICK)
    p = fld.dump_json(tmp_path / "field.json")
    back = measure.FieldSample.load_json(p)
    assert back.d == fld.d and back.dims == fld.dims
    assert (back.values == fld.values).all()
    assert back.origin == fld.origin


def test_field_sample_value_at_and_shift():
    fld = measure.FieldSample(2, np.array([1, 0, 0, 1]), origin=(0, 0),
                              dims=(2, 2))
    assert fld.value_at((0, 0)) == 1
    assert fld.value_at((1, 1)) == 1
    assert fld.value_at((0, 1)) == 0
    moved = fld.shifted((5, 5))
    assert moved.value_at((5, 5)) == 1
    with pytest.raises(KeyError):
        fld.value_at((9, 9))
    with pytest.raises(ValueError):
        measure.FieldSample(2, np.array([1, 0]), dims=(2, 2))
