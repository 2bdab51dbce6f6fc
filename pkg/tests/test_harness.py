"""Experiment harness: error statistics, config parsing, CSV determinism.

The end-to-end runs here are deliberately tiny (coarse mesh, few modes,
short horizon); the desk-scale experiment lives in the acceptance tests.
"""

import io

import numpy as np
import pytest

from spde_expint.assembly import assemble_mass
from spde_expint.errors import ConfigError
from spde_expint.harness import (
    CSV_HEADER,
    ConvergenceReport,
    ErrorRow,
    ExperimentConfig,
    SpatialConfig,
    _guarded_fit,
    config_from_file,
    fit_order,
    parse_config_text,
    run_experiment,
    spatial_experiment,
    strong_error,
    write_csv,
)
from spde_expint.mesh import build_mesh


def tiny_config(**kw):
    base = dict(betas=(2.0,), grid_nx=4, grid_ny=4, dt_list=(1 / 4, 1 / 8),
                dt_ref=1 / 16, final_time=0.5, realizations=2, seed=77,
                noise_n1=2, noise_n2=2, drift="none", flow="none",
                upwind=False, workers=1)
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# error statistics


def test_strong_error_frozen_constant_field():
    mesh = build_mesh(3, 3, 2.0, 2.0)
    M = assemble_mass(mesh)
    n = mesh.n_nodes
    coarse = np.ones((2, n))
    ref = np.zeros((2, n))
    rms, se = strong_error(coarse, ref, M)
    # ||1||_{L2([0,2]^2)} = sqrt(area) = 2, identical realizations: se = 0
    assert rms == pytest.approx(2.0, rel=1e-13)
    assert se == 0.0


def test_strong_error_stderr_delta_method():
    mesh = build_mesh(2, 2, 2.0, 2.0)
    M = assemble_mass(mesh)
    n = mesh.n_nodes
    coarse = np.vstack([np.ones(n), 3.0 * np.ones(n)])
    ref = np.zeros((2, n))
    rms, se = strong_error(coarse, ref, M)
    d2 = np.array([4.0, 36.0])              # squared L2 distances
    want_rms = np.sqrt(d2.mean())
    want_se = d2.std(ddof=1) / np.sqrt(2) / (2.0 * want_rms)
    assert rms == pytest.approx(want_rms, rel=1e-13)
    assert se == pytest.approx(want_se, rel=1e-13)


def test_strong_error_guards():
    mesh = build_mesh(2, 2, 2.0, 2.0)
    M = assemble_mass(mesh)
    n = mesh.n_nodes
    one = np.ones((1, n))
    assert strong_error(one, np.zeros((1, n)), M)[1] == 0.0    # R = 1
    assert strong_error(one, one, M) == (0.0, 0.0)             # exact match
    with pytest.raises(ValueError, match="shape"):
        strong_error(np.ones((2, n)), np.zeros((3, n)), M)
    with pytest.raises(ValueError, match="mass"):
        strong_error(np.ones((2, n + 1)), np.zeros((2, n + 1)), M)


def test_fit_order_recovers_exact_slopes():
    dts = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    for p in (0.75, 1.0, 2.0):
        errs = 3.0 * dts ** p
        assert fit_order(dts, errs) == pytest.approx(p, rel=1e-12)
    with pytest.raises(ValueError, match="two"):
        fit_order([1 / 4], [0.1])
    with pytest.raises(ValueError, match="positive"):
        fit_order([1 / 4, 1 / 8], [0.1, 0.0])


def test_guarded_fit_drops_saturated_largest_step():
    dts = np.array([1 / 2, 1 / 4, 1 / 8, 1 / 16])
    errs = np.array([0.82, 0.8, 0.4, 0.2])
    ses = np.array([0.05, 0.05, 0.001, 0.001])
    # the 1/2 and 1/4 errors are statistically indistinguishable: the fit
    # must use the clean dyadic tail, whose slope is exactly one
    assert _guarded_fit(dts, errs, ses, beta=2.0) == pytest.approx(1.0,
                                                                   rel=1e-12)
    # with tight error bars nothing is dropped and the kink drags the slope
    tight = np.full(4, 1e-6)
    assert _guarded_fit(dts, errs, tight, beta=2.0) < 0.9


# ---------------------------------------------------------------------------
# configuration


def test_config_validate_passes_defaults():
    assert ExperimentConfig().validate() is not None
    assert SpatialConfig().validate() is not None


@pytest.mark.parametrize("kw,msg", [
    (dict(betas=()), "beta"),
    (dict(betas=(2.5,)), "beta"),
    (dict(grid_nx=0), "grid"),
    (dict(dt_list=()), "dt_list"),
    (dict(dt_list=(1 / 24,)), "multiple"),
    (dict(dt_ref=1 / 10), "multiple"),
    (dict(final_time=0.7), "multiple"),
    (dict(realizations=0), "realizations"),
    (dict(scheme="euler"), "scheme"),
    (dict(drift="cubic"), "drift"),
    (dict(flow="stokes"), "flow"),
    (dict(noise_n1=0), "truncation"),
    (dict(diffusion=0.0), "diffusion"),
    (dict(matfunc_tol=0.0), "tol"),
    (dict(workers=0), "workers"),
])
def test_config_validate_rejects(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        tiny_config(**kw).validate()


@pytest.mark.parametrize("kw,msg", [
    (dict(nx_list=(4, 8, 12)), "doubling"),
    (dict(nx_list=(4, 8), ref_modes=4), "ref_modes"),
    (dict(dt=0.3), "multiple"),
    (dict(betas=(0.0,)), "beta"),
])
def test_spatial_config_validate_rejects(kw, msg):
    base = dict(betas=(2.0,), nx_list=(2, 4), ref_modes=8, dt=1 / 8,
                final_time=0.5, realizations=2)
    base.update(kw)
    with pytest.raises(ConfigError, match=msg):
        SpatialConfig(**base).validate()


def test_fingerprint_tracks_fields():
    a = tiny_config()
    b = tiny_config(seed=78)
    assert a.fingerprint() == tiny_config().fingerprint()
    assert a.fingerprint() != b.fingerprint()


def test_parse_config_text_full():
    text = """
    # experiment shape
    betas = 1.5, 2.0
    grid_nx = 8          # cells
    grid_ny = 8
    dt_list = 1/4 1/8
    dt_ref = 1/16
    final_time = 0.5
    realizations = 3
    upwind = off
    flow = none
    drift = none
    noise_n1 = 2
    noise_n2 = 2
    matfunc_tol = 1e-9
    """
    cfg = parse_config_text(text)
    assert cfg.betas == (1.5, 2.0)
    assert cfg.grid_nx == cfg.grid_ny == 8
    assert cfg.dt_list == (0.25, 0.125)
    assert cfg.dt_ref == 0.0625
    assert cfg.upwind is False
    assert cfg.matfunc_tol == 1e-9
    assert cfg.realizations == 3
    cfg.validate()


def test_parse_config_text_reports_offending_line():
    with pytest.raises(ConfigError, match="line 2: unknown key 'gridnx'"):
        parse_config_text("seed = 1\ngridnx = 8\n")
    with pytest.raises(ConfigError, match="line 1: expected key = value"):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError, match="line 1: bad value"):
        parse_config_text("realizations = many\n")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config_text("upwind = maybe\n")


def test_parse_config_respects_base():
    base = tiny_config()
    cfg = parse_config_text("seed = 5\n", base=base)
    assert cfg.seed == 5
    assert cfg.dt_list == base.dt_list


def test_config_from_file(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("seed = 9\nworkers = 2\n")
    cfg = config_from_file(p, base=tiny_config())
    assert cfg.seed == 9 and cfg.workers == 2


# ---------------------------------------------------------------------------
# CSV artifact


def test_write_csv_golden_bytes():
    config = tiny_config(seed=5)
    report = ConvergenceReport(
        rows=[ErrorRow(2.0, 0.25, 0.5, 0.01, 2, 4, 4),
              ErrorRow(2.0, 0.125, 0.25, 0.005, 2, 4, 4)],
        fitted_orders={2.0: 1.0}, config_fingerprint="x", wall_time=0.0,
        diagnostics={})
    buf = io.StringIO()
    write_csv(report, config, buf)
    assert buf.getvalue() == (
        "beta,dt,rms_error,stderr,realizations,grid_nx,grid_ny,seed\n"
        "2,0.25,5.000000000000e-01,1.000000000000e-02,2,4,4,5\n"
        "2,0.125,2.500000000000e-01,5.000000000000e-03,2,4,4,5\n"
        "# fitted_order beta=2 order=1.000000\n")


# ---------------------------------------------------------------------------
# tiny end-to-end experiments


def run_to_bytes(config):
    report = run_experiment(config)
    buf = io.StringIO()
    write_csv(report, config, buf)
    return report, buf.getvalue()


def test_tiny_temporal_experiment():
    config = tiny_config()
    report, text = run_to_bytes(config)
    assert [r.dt for r in report.rows] == [0.25, 0.125]
    errs = [r.rms_error for r in report.rows]
    assert errs[1] < errs[0] < 1.0          # coupled errors shrink with dt
    assert all(r.stderr > 0 for r in report.rows)
    assert report.config_fingerprint == config.fingerprint()
    assert len(report.diagnostics["path_checksums"][2.0]) == 2
    assert text.startswith(CSV_HEADER + "\n")
    assert "# fitted_order beta=2 order=" in text


def test_temporal_experiment_is_deterministic():
    _, once = run_to_bytes(tiny_config())
    _, twice = run_to_bytes(tiny_config())
    assert once == twice


def test_temporal_bytes_independent_of_workers():
    _, serial = run_to_bytes(tiny_config())
    _, forked = run_to_bytes(tiny_config(workers=2))
    assert serial == forked


def test_tiny_spatial_experiment():
    config = SpatialConfig(betas=(2.0,), nx_list=(2, 4), ref_modes=8,
                           dt=1 / 8, final_time=0.5, realizations=2, seed=3,
                           diffusion=1.0)
    report = spatial_experiment(config)
    hs = [r.dt for r in report.rows]
    assert hs[0] == pytest.approx(np.hypot(1.0, 1.0))
    assert hs[1] == pytest.approx(np.hypot(0.5, 0.5))
    errs = [r.rms_error for r in report.rows]
    assert errs[1] < errs[0]
    assert report.rows[0].grid_nx == 2 and report.rows[1].grid_nx == 4
    again = spatial_experiment(config)
    assert [r.rms_error for r in again.rows] == errs
