"""Property-based checks of the model identities and solver invariants."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beamspace_noma.beamdesign import design_for
from beamspace_noma.channel import (ArrayConfig, SmallScaleFading, UEProfile, beamspace_basis, channel_gain,
                                    channel_vector)
from beamspace_noma.clustering import assign_clusters, cluster_scenario, sic_order
from beamspace_noma.rates import (BeamDesign, beam_sinr, ergodic_weighted_sum_rate, mmse_receiver_and_mse,
                                  saturated_bound, upper_bound, upper_bound_terms)
from beamspace_noma.simcli import ScenarioConfig, SweepSpec, build_scenario, run_sweep, write_csv

from conftest import make_scenario, random_design

nonneg = st.floats(0, 100, allow_nan=False)
aods = st.floats(-np.pi / 2, np.pi / 2, allow_nan=False)
slow = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(st.integers(2, 64))
def test_basis_unitary(n_t):
    u = beamspace_basis(ArrayConfig(n_t)).basis
    assert np.max(np.abs(u.conj().T @ u - np.eye(n_t))) < 1e-10


@given(st.integers(2, 32), st.integers(0, 2 ** 32 - 1))
def test_norm_identity(n_t, seed):
    rng = np.random.default_rng(seed)
    eta = rng.exponential(size=n_t) * rng.integers(0, 2, n_t)
    eta[0] += 0.1
    prof = UEProfile(0.0, eta)
    f = SmallScaleFading((rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)) / np.sqrt(2))
    b = beamspace_basis(ArrayConfig(n_t))
    h = channel_vector(prof, f, b).h
    assert abs(np.linalg.norm(h) ** 2 - channel_gain(prof, f)) < 1e-10
    assert np.linalg.norm(h - b.basis @ (np.sqrt(eta) * f.coeffs)) < 1e-12


@given(nonneg, st.floats(0, 10), nonneg)
def test_mse_sinr_identity(p, eta, interference):
    v, mse = mmse_receiver_and_mse(p, eta, interference)
    gamma = eta * p / (eta * interference + 1)
    assert 0 < mse <= 1
    assert abs(1 / mse - 1 - gamma) < 1e-12
    assert v >= 0


@given(st.lists(aods, min_size=1, max_size=40), st.integers(1, 16))
def test_clustering_partition_and_containment(angles, sectors):
    profs = [UEProfile(a, np.ones(4), 1.0, i) for i, a in enumerate(angles)]
    a = assign_clusters(profs, sectors)
    flat = [u for c in a.clusters for u in c]
    assert sorted(flat) == list(range(len(angles)))
    assert 1 <= a.num_clusters <= sectors
    for m, members in enumerate(a.clusters):
        lo, hi = a.sector_interval(m)
        assert all(lo - 1e-12 <= angles[u] <= hi + 1e-12 for u in members)


@given(st.dictionaries(st.integers(0, 100), st.floats(0, 10), min_size=1, max_size=20))
def test_sic_order_non_increasing(gains):
    o = sic_order(list(gains), gains)
    assert sorted(o.ue_order) == sorted(gains)
    assert all(a >= b for a, b in zip(o.ordering_gains, o.ordering_gains[1:]))


@given(st.lists(st.tuples(aods, arrays(float, 4, elements=st.floats(0.01, 5))), min_size=1, max_size=12))
def test_scenario_order_by_expected_gain(ues):
    profs = [UEProfile(a, g, 1.0, i) for i, (a, g) in enumerate(ues)]
    sc = cluster_scenario(profs, 4)
    for m in range(sc.num_clusters):
        g = sc.eta[sc.cluster_rows(m)].sum(axis=1)
        assert np.all(np.diff(g) <= 1e-12)


@slow
@given(st.integers(2, 8), st.integers(1, 8), st.integers(0, 10_000), st.floats(-10, 30))
def test_bound_decomposition(n_t, k, seed, snr_db):
    sc = make_scenario(n_t, k, seed=seed)
    p_max = 10 ** (snr_db / 10)
    d = random_design(np.random.default_rng(seed), sc, p_max)
    per_beam = sc.weights[:, None] * np.log2(1 + beam_sinr(d, sc))
    assert abs(per_beam.sum() - upper_bound(d, sc)) < 1e-10
    np.testing.assert_allclose(upper_bound_terms(d, sc), per_beam, atol=1e-12)


@slow
@given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 10_000), st.floats(0.1, 100))
def test_saturated_homogeneous(n_t, k, seed, scale):
    sc = make_scenario(n_t, k, seed=seed)
    rng = np.random.default_rng(seed)
    nu = rng.random((k, n_t))
    sel = rng.integers(0, 2, (k, n_t))
    a = saturated_bound(nu, sel, sc)
    b = saturated_bound(scale * nu, sel, sc)
    assert a.unbounded == b.unbounded
    assert abs(a.finite - b.finite) <= 1e-9 * max(1.0, a.finite)


@slow
@given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 10_000), st.floats(0.5, 4))
def test_weight_linearity(n_t, k, seed, factor):
    sc = make_scenario(n_t, k, seed=seed)
    d = random_design(np.random.default_rng(seed), sc, 5.0)
    sc2 = make_scenario(n_t, k, seed=seed, weights=[factor] * k)
    r1 = ergodic_weighted_sum_rate(d, sc, 30, seed)
    r2 = ergodic_weighted_sum_rate(d, sc2, 30, seed)
    assert r1.weighted_sum_rate >= 0
    assert abs(r2.weighted_sum_rate - factor * r1.weighted_sum_rate) < 1e-9 * max(1.0, r2.weighted_sum_rate)


@slow
@given(st.sampled_from(["alg1", "alg2", "alg3", "mf", "sdma"]), st.integers(2, 8), st.integers(1, 8),
       st.integers(0, 10_000), st.floats(-10, 30))
def test_solver_feasibility(algo, n_t, k, seed, snr_db):
    sc = make_scenario(n_t, k, seed=seed)
    p_max = 10 ** (snr_db / 10)
    d, tr = design_for(algo, sc, p_max)
    assert d.total_power <= p_max * (1 + 1e-6)
    assert np.all(d.powers >= 0)
    if algo in ("alg2", "alg3"):
        # each beam serves at most one cluster
        for c in range(n_t):
            assert len(set(sc.cluster_of[d.selection[:, c] == 1])) <= 1
    if algo == "alg3":
        iota = tr.extras["shares"]
        for m in range(sc.num_clusters):
            assert abs(iota[sc.cluster_rows(m)].sum() - 1) < 1e-6
    if tr is not None:
        s = np.array(tr.surrogate_per_outer_iter)
        assert np.all(np.diff(s) <= 1e-8)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_csv_deterministic(seed):
    c = ScenarioConfig(n_t=4, k=3, p_max_db=5.0, seed=seed, mc_realizations=10)
    sweep = SweepSpec("snr_db", [0, 5], ("alg3", "sdma"))
    assert write_csv(run_sweep(c, sweep)) == write_csv(run_sweep(c, sweep))
    assert build_scenario(c).eta.tobytes() == build_scenario(c).eta.tobytes()
