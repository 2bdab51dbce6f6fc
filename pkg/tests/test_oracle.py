"""Spectral Ornstein-Uhlenbeck oracle and its coupling to the FEM solver.

The scalar OU recursions have closed-form moments, so the batched spectral
stepper can be checked against hand formulas, and the FEM integrator can be
checked against the stepper on shared draws.
"""

import numpy as np
import pytest

from spde_expint.noise import NoiseSpec, eigenvalues, sample_path
from spde_expint.oracle import (
    _draws_for_basis,
    cross_validate,
    expected_coupling_error,
    noise_columns,
    regularity_functional,
    regularity_study,
    spectral_basis,
    spectral_step,
)


# ---------------------------------------------------------------------------
# basis


def test_basis_structure_and_frozen_eigenvalues():
    b = spectral_basis(2, 2, lengths=(2.0, 2.0), diffusion=5.0)
    assert b.n_modes == 9
    assert tuple(b.modes[0]) == (0, 0)
    assert b.mu[0] == 0.0
    assert np.all(np.diff(b.mu) >= 0.0)
    # mu_(1,0) = d0 (pi/L)^2 with d0 = 5, L = 2
    k = int(np.flatnonzero((b.modes[:, 0] == 1) & (b.modes[:, 1] == 0))[0])
    assert b.mu[k] == pytest.approx(12.337005501361698, rel=1e-15)
    k = int(np.flatnonzero((b.modes[:, 0] == 1) & (b.modes[:, 1] == 1))[0])
    assert b.mu[k] == pytest.approx(2 * 12.337005501361698, rel=1e-15)


def test_basis_validation():
    with pytest.raises(ValueError, match="truncation"):
        spectral_basis(0, 4)
    with pytest.raises(ValueError, match="diffusion"):
        spectral_basis(2, 2, diffusion=0.0)


def test_noise_columns_mapping():
    b = spectral_basis(2, 2)
    s = NoiseSpec(beta=2.0, n1=2, n2=2)
    cols = noise_columns(b, s)
    m_spec = s.modes()
    for k, (i, j) in enumerate(b.modes):
        if i == 0 and j == 0:
            assert cols[k] == -1          # excluded from the noise
        else:
            assert tuple(m_spec[cols[k]]) == (i, j)
    # a narrower noise truncation leaves the extra basis modes silent
    cols = noise_columns(b, NoiseSpec(beta=2.0, n1=1, n2=1))
    silent = b.modes[:, 0] == 2
    assert np.all(cols[silent] == -1)


def test_draws_for_basis_zero_fills_missing_modes():
    b = spectral_basis(3, 3)
    s = NoiseSpec(beta=2.0, n1=2, n2=2)
    path = sample_path(s, 0.5, 4, seed=3, trajectory_id=0)
    draws = _draws_for_basis(b, s, path.increments)
    assert draws.shape == (4, b.n_modes)
    cols = noise_columns(b, s)
    np.testing.assert_array_equal(draws[:, cols < 0], 0.0)
    present = cols >= 0
    np.testing.assert_array_equal(draws[:, present],
                                  path.increments[:, cols[present]])


# ---------------------------------------------------------------------------
# stepping


def test_spectral_step_matches_hand_formula():
    b = spectral_basis(1, 1, diffusion=2.0)
    rng = np.random.default_rng(0)
    c0 = rng.standard_normal(b.n_modes)
    xi = rng.standard_normal(b.n_modes)
    F = rng.standard_normal(b.n_modes)
    dt = 0.125
    got = spectral_step(c0, b, dt, xi, drift_coeffs=F)
    z = -b.mu * dt
    phi = np.where(z == 0.0, 1.0, np.expm1(z) / np.where(z == 0.0, 1.0, z))
    want = np.exp(z) * (c0 + xi) + dt * phi * F
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_spectral_step_batch_equals_column_loop():
    b = spectral_basis(2, 3, diffusion=5.0)
    rng = np.random.default_rng(1)
    C = rng.standard_normal((b.n_modes, 6))
    X = rng.standard_normal((b.n_modes, 6))
    batch = spectral_step(C, b, 0.25, X)
    for k in range(6):
        np.testing.assert_array_equal(batch[:, k],
                                      spectral_step(C[:, k], b, 0.25, X[:, k]))


def test_zero_mode_is_a_pure_random_walk():
    b = spectral_basis(1, 1)
    assert b.mu[0] == 0.0
    c = np.zeros(b.n_modes)
    total = 0.0
    rng = np.random.default_rng(5)
    for _ in range(10):
        xi = rng.standard_normal(b.n_modes)
        c = spectral_step(c, b, 0.5, xi)
        total += xi[0]
    assert c[0] == pytest.approx(total, rel=1e-14)


def test_ou_second_moment_matches_closed_form():
    # E c_m^2 = lam dt e^{-2 mu dt} (1 - e^{-2 mu dt m}) / (1 - e^{-2 mu dt})
    mu, lam, dt = 3.0, 0.8, 1.0 / 16
    n_paths, steps = 20000, 48
    rng = np.random.default_rng(42)
    c = np.zeros(n_paths)
    decay = np.exp(-mu * dt)
    for m in range(steps):
        c = decay * (c + np.sqrt(lam * dt) * rng.standard_normal(n_paths))
        q = decay * decay
        want = lam * dt * q * (1.0 - q ** (m + 1)) / (1.0 - q)
        got = (c * c).mean()
        se = (c * c).std(ddof=1) / np.sqrt(n_paths)
        assert abs(got - want) <= 4.0 * se


def test_spectral_step_reproduces_ou_stationary_variance():
    # drive one genuine basis mode through spectral_step batched paths
    b = spectral_basis(1, 1, diffusion=2.0)
    k = 3                                  # the (1,1) mode, largest mu
    mu = b.mu[k]
    lam, dt, n_paths, steps = 0.5, 1.0 / 8, 20000, 200
    rng = np.random.default_rng(7)
    C = np.zeros((b.n_modes, n_paths))
    for _ in range(steps):
        X = np.zeros((b.n_modes, n_paths))
        X[k] = np.sqrt(lam * dt) * rng.standard_normal(n_paths)
        C = spectral_step(C, b, dt, X)
    q = np.exp(-2.0 * mu * dt)
    want = lam * dt * q / (1.0 - q)
    got = (C[k] ** 2).mean()
    se = (C[k] ** 2).std(ddof=1) / np.sqrt(n_paths)
    assert abs(got - want) <= 4.0 * se


# ---------------------------------------------------------------------------
# regularity functional


def test_regularity_functional_hand_values():
    b = spectral_basis(1, 1, diffusion=2.0)
    c = np.zeros(b.n_modes)
    c[0] = 5.0                             # zero mode never counts
    assert regularity_functional(c, b, beta=1.5) == 0.0
    c = np.zeros(b.n_modes)
    k = 2
    c[k] = 3.0
    for beta in (1.0, 1.5, 2.0):
        want = b.mu[k] ** beta * 9.0
        assert regularity_functional(c, b, beta) == pytest.approx(want,
                                                                  rel=1e-14)
    C = np.zeros((b.n_modes, 2))
    C[k, 0] = 3.0
    got = regularity_functional(C, b, 2.0)
    assert got.shape == (2,)
    assert got[1] == 0.0


def test_regularity_study_is_reproducible_and_sane():
    rep = regularity_study(beta=2.0, n_paths=100, dt=1.0 / 16, final_time=1.0,
                           n1=8, n2=8, seed=3)
    assert rep.times.shape == rep.mean.shape == rep.stderr.shape == (16,)
    assert rep.times[0] == pytest.approx(1.0 / 16)
    assert np.all(rep.mean > 0.0) and np.all(rep.stderr > 0.0)
    assert rep.time_mean == pytest.approx(rep.mean.mean())
    # mean-square norm starts from zero, so the early trace must rise
    assert rep.mean[3] > rep.mean[0]
    again = regularity_study(beta=2.0, n_paths=100, dt=1.0 / 16,
                             final_time=1.0, n1=8, n2=8, seed=3)
    np.testing.assert_array_equal(again.mean, rep.mean)
    with pytest.raises(ValueError, match="multiple"):
        regularity_study(beta=2.0, n_paths=10, dt=0.3, final_time=1.0)


# ---------------------------------------------------------------------------
# FEM vs spectral coupling


def test_cross_validate_deterministic_decay_converges_in_h():
    spec = NoiseSpec(beta=2.0, n1=2, n2=2)
    reports = [
        cross_validate(nx, spec, dt=1.0 / 256, final_time=0.25,
                       diffusion=1.0, initial_mode=(1, 1, 1.0),
                       with_noise=False)
        for nx in (8, 16)
    ]
    # exact solution: amplitude e^{-mu T} on the (1,1) cosine
    mu = 2.0 * (np.pi / 2.0) ** 2
    for rep in reports:
        assert rep.solution_rms == pytest.approx(np.exp(-mu * 0.25), rel=0.05)
    ratio = reports[0].distance_rms / reports[1].distance_rms
    assert 2.5 <= ratio <= 6.0             # near 4: second order in h


def test_cross_validate_with_noise_tracks_the_oracle():
    spec = NoiseSpec(beta=2.0, n1=2, n2=2)
    rep = cross_validate(8, spec, dt=1.0 / 64, final_time=0.5,
                         realizations=2, diffusion=1.0, seed=12)
    assert rep.per_realization.shape == (2,)
    assert rep.distance_rms < 0.05 * rep.solution_rms
    with pytest.raises(ValueError, match="multiple"):
        cross_validate(4, spec, dt=0.3, final_time=1.0)


# ---------------------------------------------------------------------------
# exact coupled-error expectation


def test_expected_coupling_error_vanishes_at_dt_ref():
    spec = NoiseSpec(beta=2.0, n1=4, n2=4)
    rep = expected_coupling_error(4, spec, dt_list=(1 / 8, 1 / 16, 1 / 32),
                                  dt_ref=1 / 32, final_time=0.5, diffusion=5.0)
    assert rep.dts[0] > rep.dts[-1]        # sorted descending
    assert rep.rms[-1] == 0.0              # self-comparison at dt_ref
    assert rep.rms[0] > rep.rms[1] > 0.0
    with pytest.raises(ValueError, match="integer multiple"):
        expected_coupling_error(4, spec, dt_list=(0.3,), dt_ref=1 / 32,
                                final_time=0.5)


def test_expected_coupling_error_matches_monte_carlo():
    """The drift-free temporal experiment scatters around the closed form."""
    from spde_expint.harness import ExperimentConfig, run_experiment

    config = ExperimentConfig(betas=(2.0,), grid_nx=8, grid_ny=8,
                              dt_list=(1 / 8, 1 / 16, 1 / 32),
                              dt_ref=1 / 128, final_time=1.0,
                              realizations=40, seed=5,
                              noise_n1=16, noise_n2=16,
                              drift="none", flow="none", upwind=False)
    report = run_experiment(config)
    spec = NoiseSpec(beta=2.0, n1=16, n2=16)
    exact = expected_coupling_error(8, spec, config.dt_list, config.dt_ref,
                                    config.final_time, diffusion=5.0)
    for row, want in zip(report.rows, exact.rms):
        assert abs(row.rms_error - want) <= 3.0 * row.stderr
