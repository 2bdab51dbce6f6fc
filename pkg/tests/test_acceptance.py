"""Acceptance gate: one test and one printed verdict line per criterion.

Cheap criteria come first; the spatial study (a few minutes) and the
desk-scale temporal study (roughly twenty minutes on one core) run last as
module-scoped fixtures.  Use ``pytest tests/test_acceptance.py -v -s`` to
watch the verdict lines appear as the criteria complete.
"""

import io

import numpy as np
import pytest
import scipy.linalg as sla

from spde_expint.assembly import CoefficientField, build_operators
from spde_expint.darcy import (
    boundary_flux,
    build_permeability,
    nodal_divergence,
    solve_pressure,
    velocity_from_pressure,
)
from spde_expint.harness import (
    ExperimentConfig,
    SpatialConfig,
    run_experiment,
    spatial_experiment,
    write_csv,
)
from spde_expint.integrator import (
    DRIFTS,
    TrajectoryState,
    drift_eval,
    exp_euler_step,
)
from spde_expint.matfunc import OperatorHandle, expm_action, phi1_action
from spde_expint.mesh import build_mesh
from spde_expint.noise import NoiseSpec, coarsen, eigenvalues, sample_path
from spde_expint.oracle import regularity_study


def verdict(name, detail, ok):
    flag = "PASS" if ok else "FAIL"
    print(f"[ACCEPTANCE] {name}: {detail} -> {flag}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# matrix function accuracy


def phi1_scalar(z):
    z = complex(z)
    if abs(z) < 1e-4:
        return 1.0 + z / 2.0 + z * z / 6.0 + z ** 3 / 24.0
    return (np.exp(z) - 1.0) / z


def random_system(rng, n):
    """Well-conditioned eigenbasis so the eig oracle itself is trustworthy."""
    while True:
        A = rng.standard_normal((n, n)) / np.sqrt(n) - 0.5 * np.eye(n)
        lam, P = np.linalg.eig(A)
        if np.linalg.cond(P) <= 1e6:
            return A, lam, P


def eig_apply(fvals, lam, P, v):
    return (P @ (fvals(lam) * np.linalg.solve(P, v.astype(complex)))).real


def test_matfunc_against_eig_oracle():
    tol = 1e-8
    rng = np.random.default_rng(2026)
    worst_expm = worst_phi1 = worst_ident = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 201))
        A, lam, P = random_system(rng, n)
        v = rng.standard_normal(n)
        t = float(rng.uniform(0.1, 2.0))
        method = "krylov" if trial % 2 else "auto"

        exact_e = eig_apply(np.exp, t * lam, P, v)
        exact_p = eig_apply(lambda z: np.array([phi1_scalar(w) for w in z]),
                            t * lam, P, v)
        handle = OperatorHandle.from_matrix(A)
        got_e = expm_action(handle, v, t, tol=tol, method=method).value
        got_p = phi1_action(handle, v, t, tol=tol, method=method).value
        worst_expm = max(worst_expm, np.linalg.norm(got_e - exact_e)
                         / np.linalg.norm(exact_e))
        worst_phi1 = max(worst_phi1, np.linalg.norm(got_p - exact_p)
                         / np.linalg.norm(exact_p))
        # phi1 identity: t A phi1(tA) v + v = e^{tA} v
        ident = t * (A @ got_p) + v
        worst_ident = max(worst_ident, np.linalg.norm(ident - got_e)
                          / np.linalg.norm(got_e))
    bound = max(tol, 1e-9)
    ok = worst_expm <= bound and worst_phi1 <= bound and worst_ident <= 10 * tol
    verdict("matfunc oracle (100 systems, dim <= 200)",
            f"worst expm {worst_expm:.2e}, phi1 {worst_phi1:.2e} "
            f"(bound {bound:.0e}); identity {worst_ident:.2e} "
            f"(bound {10 * tol:.0e})", ok)


# ---------------------------------------------------------------------------
# noise increments


def test_noise_covariance_and_coarsening():
    spec = NoiseSpec(beta=2.0, n1=4, n2=4)
    dt = 1.0 / 64
    N = 100_000
    path = sample_path(spec, dt, N, seed=123, trajectory_id=0)
    lam = eigenvalues(spec)
    rng = np.random.default_rng(7)
    idx = rng.choice(spec.n_modes, size=20, replace=False)

    worst = 0.0
    for i in idx:
        var_hat = float(np.mean(path.increments[:, i] ** 2))
        se = lam[i] * dt * np.sqrt(2.0 / N)
        worst = max(worst, abs(var_hat - lam[i] * dt) / se)
    worst_off = 0.0
    for _ in range(20):
        i, j = rng.choice(spec.n_modes, size=2, replace=False)
        cov_hat = float(np.mean(path.increments[:, i] * path.increments[:, j]))
        se = dt * np.sqrt(lam[i] * lam[j] / N)
        worst_off = max(worst_off, abs(cov_hat) / se)

    short = sample_path(spec, dt, 1024, seed=123, trajectory_id=1)
    once = coarsen(short, 4)
    twice = coarsen(coarsen(short, 2), 2)
    bitwise = np.array_equal(once.increments, twice.increments)

    ok = worst <= 3.0 and worst_off <= 3.0 and bitwise
    verdict("noise covariance (1e5 increments, 20 modes)",
            f"worst diag {worst:.2f} SE, off-diag {worst_off:.2f} SE "
            f"(bound 3), coarsen 2*2 == 4 bitwise: {bitwise}", ok)


# ---------------------------------------------------------------------------
# steady Darcy flow


def test_darcy_pressure_and_conservation():
    mesh = build_mesh(32, 32, 2.0, 2.0)

    uniform = build_permeability(mesh, streaks=())
    p = solve_pressure(mesh, uniform)
    exact = 1.0 - mesh.nodes[:, 0] / 2.0
    err_hom = float(np.max(np.abs(p - exact)))

    streaked = build_permeability(mesh)
    ps = solve_pressure(mesh, streaked)
    vel = velocity_from_pressure(mesh, streaked, ps)
    fin = boundary_flux(mesh, vel, "left")
    fout = boundary_flux(mesh, vel, "right")
    balance = abs(fin + fout) / abs(fout)
    div = nodal_divergence(mesh, vel)
    x = mesh.nodes[:, 0]
    interior = (x > 1e-12) & (x < 2.0 - 1e-12)
    worst_div = float(np.max(np.abs(div[interior]))) / abs(fout)

    ok = err_hom <= 1e-10 and balance <= 1e-8 and worst_div <= 1e-8
    verdict("darcy flow",
            f"uniform |p - (1 - x/2)| {err_hom:.1e} (bound 1e-10); streaked "
            f"flux balance {balance:.1e}, divergence {worst_div:.1e} "
            f"(bound 1e-8 relative)", ok)


# ---------------------------------------------------------------------------
# mean-square regularity of the mild solution


def test_regularity_functional_stays_bounded():
    rep = regularity_study(beta=2.0, n_paths=1000)
    ratio = abs(rep.slope) / rep.time_mean
    ok = ratio <= 0.05
    verdict("regularity (beta=2, 1000 paths)",
            f"|trend| / time-mean {ratio:.4f} (bound 0.05)", ok)


# ---------------------------------------------------------------------------
# scheme-form equivalence


def test_exp_euler_equals_mild_form():
    tol = 1e-10
    rng = np.random.default_rng(99)
    mesh = build_mesh(7, 7, 2.0, 2.0)
    dt = 1.0 / 32
    drift = DRIFTS["kink"]
    worst = 0.0
    for _ in range(100):
        coeffs = CoefficientField.isotropic(
            float(rng.uniform(0.5, 5.0)),
            velocity=tuple(rng.uniform(-3.0, 3.0, size=2)))
        ops = build_operators(mesh, coeffs, bc="left-dirichlet", upwind=True)
        u0 = rng.standard_normal(ops.n_free)
        dW = 0.1 * rng.standard_normal(ops.n_free)
        got = exp_euler_step(TrajectoryState(0, 0.0, u0), ops, drift, dW, dt,
                             tol=tol)

        M = ops.M_free.toarray()
        A = -np.linalg.solve(M, ops.K_free.toarray())
        b = np.linalg.solve(M, ops.boundary_forcing)
        f = drift_eval(drift, ops.embed(u0))[ops.free_nodes]
        E = sla.expm(dt * A)
        z = u0 + dW
        want = E @ z + np.linalg.solve(A, (E - np.eye(ops.n_free)) @ (b + f))
        worst = max(worst, np.linalg.norm(got.u - want)
                    / np.linalg.norm(want))
    ok = worst <= 10 * tol
    verdict("scheme-form equivalence (100 trials, 56 dofs)",
            f"worst relative gap {worst:.2e} (bound {10 * tol:.0e})", ok)


# ---------------------------------------------------------------------------
# reproducibility


def test_csv_bytes_do_not_depend_on_worker_count():
    def csv_for(workers):
        config = ExperimentConfig(betas=(1.5, 2.0), grid_nx=8, grid_ny=8,
                                  dt_list=(1 / 8, 1 / 16), dt_ref=1 / 32,
                                  final_time=1.0, realizations=3, seed=42,
                                  noise_n1=4, noise_n2=4, workers=workers)
        buf = io.StringIO()
        write_csv(run_experiment(config), config, buf)
        return buf.getvalue()

    serial = csv_for(1)
    ok = all(csv_for(w) == serial for w in (2, 3))
    verdict("determinism", f"CSV bytes identical for workers 1/2/3: {ok}", ok)


# ---------------------------------------------------------------------------
# spatial convergence (a few minutes)


@pytest.fixture(scope="module")
def spatial_report():
    return spatial_experiment(SpatialConfig())


def test_spatial_order_beta_15(spatial_report):
    order = spatial_report.fitted_orders[1.5]
    ok = 1.2 <= order <= 1.8
    verdict("spatial order (beta=1.5)",
            f"fitted {order:.3f} in [1.2, 1.8]", ok)


def test_spatial_order_beta_20(spatial_report):
    order = spatial_report.fitted_orders[2.0]
    ok = 1.6 <= order <= 2.2
    verdict("spatial order (beta=2)",
            f"fitted {order:.3f} in [1.6, 2.2]", ok)


# ---------------------------------------------------------------------------
# temporal convergence (the desk-scale experiment; the long pole)


@pytest.fixture(scope="module")
def temporal_report():
    return run_experiment(ExperimentConfig())


def test_temporal_order_beta_15(temporal_report):
    order = temporal_report.fitted_orders[1.5]
    ok = 0.60 <= order <= 0.90
    verdict("temporal order (beta=1.5)",
            f"fitted {order:.3f} in [0.60, 0.90] "
            f"(wall {temporal_report.wall_time:.0f}s)", ok)


def test_temporal_order_beta_20(temporal_report):
    order = temporal_report.fitted_orders[2.0]
    ok = 0.85 <= order <= 1.10
    verdict("temporal order (beta=2)",
            f"fitted {order:.3f} in [0.85, 1.10]", ok)
