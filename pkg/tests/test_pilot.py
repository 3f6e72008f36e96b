from fractions import Fraction
from math import comb

import numpy as np
import pytest

from irsloc.pilot import (IdentifiabilityError, ObservationSet, PilotSchedule,
                          build_design_matrix, build_schedule,
                          count_product_estimates, ls_covariance, ls_estimate,
                          ls_estimates, schedule_efficiency,
                          simulate_pilot_round, true_omega)
from irsloc.scene import SceneConfig, synthesize_scene
from irsloc.util import khatri_rao, vec


def noiseless_config(**kw):
    base = dict(sigma2_dbm=-np.inf, sigma2_si_db=-np.inf, sigma2_ref_db=-np.inf)
    base.update(kw)
    return SceneConfig(**base)


def test_subframe_enumeration():
    sched = build_schedule(4, 1, 9)
    assert sched.n_subframes == 4
    assert [a for a, _ in sched.subframes] == [(0,), (1,), (2,), (3,)]
    assert build_schedule(4, 2, 4).n_subframes == 6


def test_identifiability_guard():
    with pytest.raises(IdentifiabilityError):
        build_schedule(4, 1, 9, n_diffs=8)
    with pytest.raises(IdentifiabilityError):
        build_schedule(4, 2, 5, n_diffs=9)


def test_efficiency_values():
    assert schedule_efficiency(4, 1, 25) == pytest.approx(0.02, rel=1e-12)
    assert schedule_efficiency(4, 2, 25) == pytest.approx(2 * 2 / 300, rel=1e-12)
    assert schedule_efficiency(4, 1, 25) > schedule_efficiency(4, 2, 25)


def test_efficiency_matches_counting_construction():
    # closed form == (estimates per pair) / (pilot cost), exact rationals
    for m in range(2, 7):
        for m_t in range(1, m):
            n = 7
            estimates = count_product_estimates(m, m_t)
            assert estimates == m_t * (m - m_t) * comb(m, m_t)
            eta = Fraction(estimates, m * (m - 1) // 2) / Fraction(comb(m, m_t) * n * m_t)
            assert eta == Fraction(2 * (m - m_t), n * m * (m - 1))
            assert schedule_efficiency(m, m_t, n) == pytest.approx(float(eta), rel=1e-12)


def test_design_matrix_dimensions():
    for m, m_t, n in ((4, 1, 9), (4, 2, 6), (5, 2, 4)):
        sched = build_schedule(m, m_t, n)
        phi = build_design_matrix(sched)
        c = sched.n_diffs
        assert phi.shape == (c * (m - m_t), n * m_t * (m - m_t))


def test_design_matrix_conditioning():
    for n in (4, 9, 16, 25, 32):
        sched = build_schedule(4, 1, n)
        phi = build_design_matrix(sched)
        svals = np.linalg.svd(phi, compute_uv=False)
        assert svals[0] / svals[-1] < 1e3
    sched = build_schedule(4, 2, 8)
    phi = build_design_matrix(sched)
    svals = np.linalg.svd(phi, compute_uv=False)
    assert svals[0] / svals[-1] < 1e3


def test_unit_selector_structure():
    # dtheta a unit vector picks out exactly the columns of row n
    n, m = 3, 3
    sched = build_schedule(m, 1, n)
    row = 1
    sched.delta_theta = np.zeros((n, n), dtype=complex)
    sched.delta_theta[:, row] = 1.0
    sched.irs_base = np.zeros((n, n), dtype=complex)
    sched.pilots = np.ones((n, 1), dtype=complex)
    phi = build_design_matrix(sched)
    n_rx = m - 1
    cols = np.zeros(n * n_rx, dtype=bool)
    cols[row * n_rx:(row + 1) * n_rx] = True
    assert np.all(phi[:, ~cols] == 0)
    assert np.all(np.abs(phi[:, cols]).sum(axis=0) > 0)


def scalar_two_antenna_schedule():
    return PilotSchedule(
        m_antennas=2, m_t=1, n_elements=1, pilot_power=1.0,
        subframes=[((0,), (1,))],
        delta_theta=np.array([[1.0 + 0j]]),
        irs_base=np.array([[0.0 + 0j]]),
        pilots=np.array([[1.0 + 0j]]))


def test_scalar_model_value():
    cfg = noiseless_config(m_antennas=2, n_x=1, n_y=1)
    scene = synthesize_scene(cfg, seed=0)
    scene.G = np.array([[2.0 + 0j, 1.0 + 0j]])  # product g_a * g_b = 2
    sched = scalar_two_antenna_schedule()
    obs = simulate_pilot_round(scene, sched, seed=1)
    assert obs.ytilde.shape == (1, 1)
    assert obs.ytilde[0, 0] == pytest.approx(2.0, abs=1e-14)


def test_static_channels_cancel_exactly():
    # strong static leakage, zero noise: observation independent of statics
    cfg = SceneConfig(m_antennas=4, n_x=3, n_y=2, sigma2_dbm=-np.inf,
                      sigma2_si_db=30.0, sigma2_ref_db=30.0)
    scene = synthesize_scene(cfg, seed=3)
    sched = build_schedule(4, 1, 6)
    obs_a = simulate_pilot_round(scene, sched, seed=11)
    obs_b = simulate_pilot_round(scene, sched, seed=222)  # different statics
    # cancellation is exact in exact arithmetic; in floats the residue is
    # bounded by eps times the (huge) per-slot static amplitude
    static_amp = np.sqrt(scene.config.si_power) + np.sqrt(scene.config.ref_power)
    atol = 1e-12 * static_amp
    assert np.allclose(obs_a.ytilde, obs_b.ytilde, rtol=0, atol=atol)
    for p in range(sched.n_subframes):
        model = obs_a.phi @ true_omega(scene, sched, p)
        assert np.allclose(obs_a.ytilde[p], model, rtol=0, atol=atol)


def loop_oracle_ytilde(scene, sched, p):
    """Scalar-loop evaluation of G_B^T dTheta G_A x, difference by difference."""
    a_set, b_set = sched.subframes[p]
    n_rx = sched.n_rx
    out = np.zeros(sched.n_diffs * n_rx, dtype=complex)
    for l in range(sched.n_diffs):
        for j, b in enumerate(b_set):
            acc = 0.0 + 0.0j
            for n in range(sched.n_elements):
                for i, a in enumerate(a_set):
                    acc += (scene.G[n, b] * sched.delta_theta[l, n]
                            * scene.G[n, a] * sched.pilots[l, i])
            out[l * n_rx + j] = acc
    return out


@pytest.mark.parametrize("m,m_t,n", [(4, 1, 5), (4, 2, 4), (5, 2, 3)])
def test_noiseless_observation_matches_loop_oracle(m, m_t, n):
    cfg = noiseless_config(m_antennas=m, n_x=n, n_y=1)
    scene = synthesize_scene(cfg, seed=9)
    sched = build_schedule(m, m_t, n)
    obs = simulate_pilot_round(scene, sched, seed=2)
    for p in range(sched.n_subframes):
        oracle = loop_oracle_ytilde(scene, sched, p)
        scale = np.linalg.norm(oracle)
        assert np.linalg.norm(obs.ytilde[p] - oracle) < 1e-10 * scale
        model = obs.phi @ true_omega(scene, sched, p)
        assert np.linalg.norm(model - oracle) < 1e-10 * scale


def test_khatri_rao_coordinate_layout():
    # omega coordinates are g_{n,a} g_{n,b} in (n, a, b) order
    cfg = noiseless_config(m_antennas=4, n_x=2, n_y=1)
    scene = synthesize_scene(cfg, seed=4)
    sched = build_schedule(4, 2, 2)
    p = 1
    a_set, b_set = sched.subframes[p]
    omega = true_omega(scene, sched, p)
    n_rx = sched.n_rx
    for n in range(2):
        for i, a in enumerate(a_set):
            for j, b in enumerate(b_set):
                flat = n * sched.m_t * n_rx + i * n_rx + j
                assert omega[flat] == pytest.approx(scene.G[n, a] * scene.G[n, b])
    kr = khatri_rao(scene.G[:, list(a_set)].T, scene.G[:, list(b_set)].T)
    assert np.allclose(omega, vec(kr))


def test_ls_noiseless_consistency():
    cfg = noiseless_config(m_antennas=4, n_x=3, n_y=1)
    scene = synthesize_scene(cfg, seed=14)
    sched = build_schedule(4, 1, 3)
    obs = simulate_pilot_round(scene, sched, seed=5)
    for p in range(sched.n_subframes):
        omega = true_omega(scene, sched, p)
        est = ls_estimate(obs, p)
        assert np.linalg.norm(est - omega) < 1e-10 * np.linalg.norm(omega)


def test_ls_covariance_identity_case():
    assert np.allclose(ls_covariance(np.eye(3), 0.5), np.eye(3))
    with pytest.raises(ValueError):
        ls_covariance(np.eye(3), 0.0)


def test_rank_deficiency_detected():
    sched = build_schedule(3, 1, 2)
    phi = build_design_matrix(sched)
    phi[:, 0] = phi[:, 1]
    with pytest.raises(IdentifiabilityError):
        ObservationSet(schedule=sched, ytilde=np.zeros((3, phi.shape[0])),
                       phi=phi, sigma2=0.0)


def test_empirical_covariance_matches_model():
    # Monte Carlo over full simulation rounds: sample covariance of the LS
    # estimate vs 2 sigma^2 (Phi^H Phi)^{-1}, and differenced noise variance
    # vs 2 sigma^2 per complex dimension.
    cfg = SceneConfig(m_antennas=2, n_x=2, n_y=1, sigma2_dbm=0.0,
                      sigma2_si_db=-10.0, sigma2_ref_db=-10.0)
    scene = synthesize_scene(cfg, seed=21)
    sched = build_schedule(2, 1, 2, pilot_power=4.0)
    obs0 = simulate_pilot_round(scene, sched, seed=0)
    sigma2 = cfg.noise_power
    expected = ls_covariance(obs0.phi, sigma2)
    omega = true_omega(scene, sched, 0)

    rng_seeds = range(10_000)
    errs = []
    noise_power = []
    for s in rng_seeds:
        obs = simulate_pilot_round(scene, sched, seed=1000 + s)
        errs.append(ls_estimate(obs, 0) - omega)
        resid = obs.ytilde[0] - obs.phi @ omega
        noise_power.append(np.mean(np.abs(resid) ** 2))
    errs = np.asarray(errs)
    sample_cov = errs.T @ errs.conj() / errs.shape[0]
    rel = np.linalg.norm(sample_cov - expected) / np.linalg.norm(expected)
    assert rel < 0.10
    assert np.mean(noise_power) == pytest.approx(2 * sigma2, rel=0.05)


def test_ls_estimates_stacks_all_subframes():
    cfg = noiseless_config()
    scene = synthesize_scene(cfg, seed=2)
    sched = build_schedule(cfg.m_antennas, 1, cfg.n_elements)
    obs = simulate_pilot_round(scene, sched, seed=3)
    stacked = ls_estimates(obs)
    assert stacked.shape == (sched.n_subframes, obs.phi.shape[1])
