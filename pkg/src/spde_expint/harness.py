"""Monte Carlo strong-convergence experiments and their CSV artifacts.

The temporal experiment follows the coupled self-convergence protocol: per
realization one fine Q-Wiener path is drawn at the reference step, the
reference solution is computed with the selected scheme at ``dt_ref``, and
every coarse run consumes block-summed increments of the same path.  The
root mean square L2 error at the final time is reported per (beta, dt) and
the order is the least squares slope in log-log.

Determinism: everything is derived from (seed, trajectory_id), results are
reduced in trajectory order, and CSV floats use fixed formats, so repeated
runs produce byte-identical files for any worker count.
"""

import hashlib
import logging
import multiprocessing
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from . import noise as noise_mod
from .assembly import CoefficientField, build_operators
from .darcy import build_permeability, solve_pressure, velocity_from_pressure
from .errors import ConfigError
from .integrator import DRIFTS, run_trajectory
from .mesh import build_mesh
from .oracle import _draws_for_basis, spectral_basis, spectral_step

__all__ = [
    "ExperimentConfig",
    "SpatialConfig",
    "ErrorRow",
    "ConvergenceReport",
    "strong_error",
    "fit_order",
    "run_experiment",
    "spatial_experiment",
    "write_csv",
    "parse_config_text",
    "config_from_file",
]

log = logging.getLogger(__name__)

CSV_HEADER = "beta,dt,rms_error,stderr,realizations,grid_nx,grid_ny,seed"


@dataclass(frozen=True)
class ExperimentConfig:
    """Temporal strong-convergence experiment; defaults are the desk scale."""

    betas: tuple = (1.5, 2.0)
    epsilon: float = 1e-3
    grid_nx: int = 32
    grid_ny: int = 32
    dt_list: tuple = (1 / 16, 1 / 32, 1 / 64, 1 / 128, 1 / 256)
    dt_ref: float = 1 / 1024
    final_time: float = 2.0
    realizations: int = 30
    seed: int = 1000
    scheme: str = "expeuler"
    noise_n1: int = 64
    noise_n2: int = 64
    drift: str = "kink"
    flow: str = "none"
    upwind: bool = False
    diffusion: float = 5.0
    lengths: tuple = (2.0, 2.0)
    matfunc_tol: float = 1e-8
    out: str = "convergence.csv"
    workers: int = 1

    def validate(self):
        if not self.betas:
            raise ConfigError("at least one beta is required")
        for b in self.betas:
            if not (0.0 < b <= 2.0):
                raise ConfigError(f"beta must lie in (0, 2], got {b}")
        if self.grid_nx < 1 or self.grid_ny < 1:
            raise ConfigError("grid sizes must be positive")
        if not self.dt_list:
            raise ConfigError("dt_list must not be empty")
        if self.dt_ref <= 0:
            raise ConfigError("dt_ref must be positive")
        for dt in self.dt_list:
            ratio = dt / self.dt_ref
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ConfigError(f"dt={dt} is not an integer multiple of dt_ref={self.dt_ref}")
            msteps = self.final_time / dt
            if abs(msteps - round(msteps)) > 1e-9:
                raise ConfigError(f"final_time is not a multiple of dt={dt}")
        mref = self.final_time / self.dt_ref
        if abs(mref - round(mref)) > 1e-9:
            raise ConfigError("final_time is not a multiple of dt_ref")
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if self.scheme not in ("expeuler", "semiimplicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.drift not in DRIFTS:
            raise ConfigError(f"unknown drift {self.drift!r}")
        if self.flow not in ("none", "darcy"):
            raise ConfigError(f"unknown flow {self.flow!r}")
        if self.noise_n1 < 1 or self.noise_n2 < 1:
            raise ConfigError("noise truncation bounds must be at least 1")
        if self.diffusion <= 0:
            raise ConfigError("diffusion must be positive")
        if self.matfunc_tol <= 0:
            raise ConfigError("matfunc_tol must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self

    def fingerprint(self):
        text = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class SpatialConfig:
    """Spatial convergence study against the spectral reference.

    Runs the self-adjoint oracle-comparable configuration (isotropic
    diffusion, pure Neumann, no drift, no flow) on a chain of nested meshes.
    Every mesh is driven by the same ref_modes x ref_modes path the spectral
    reference consumes, so the target problem is fixed across the chain and
    the error keeps the unresolved-mode tail that carries the h^beta rate;
    truncating per mesh instead would measure the plain interpolation rate
    h^2 for every beta.
    """

    betas: tuple = (1.5, 2.0)
    epsilon: float = 1e-3
    nx_list: tuple = (4, 8, 16, 32)
    ref_modes: int = 64
    dt: float = 1 / 128
    final_time: float = 2.0
    realizations: int = 30
    seed: int = 1000
    diffusion: float = 5.0
    lengths: tuple = (2.0, 2.0)
    matfunc_tol: float = 1e-8
    out: str = "spatial.csv"
    workers: int = 1

    def validate(self):
        if not self.betas or not self.nx_list:
            raise ConfigError("betas and nx_list must not be empty")
        for b in self.betas:
            if not (0.0 < b <= 2.0):
                raise ConfigError(f"beta must lie in (0, 2], got {b}")
        for a, b in zip(self.nx_list, self.nx_list[1:]):
            if b != 2 * a:
                raise ConfigError("nx_list must be a nested doubling chain")
        if max(self.nx_list) > self.ref_modes:
            raise ConfigError("ref_modes must cover the finest mesh")
        steps = self.final_time / self.dt
        if self.dt <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ConfigError("final_time must be a positive multiple of dt")
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self

    def fingerprint(self):
        text = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ErrorRow:
    beta: float
    dt: float                         # refinement parameter (h for spatial runs)
    rms_error: float
    stderr: float
    realizations: int
    grid_nx: int
    grid_ny: int


@dataclass
class ConvergenceReport:
    rows: list
    fitted_orders: dict               # beta -> least squares order
    config_fingerprint: str
    wall_time: float
    diagnostics: dict


def strong_error(coarse, reference, M):
    """Root mean square L2(M) distance over realizations, with its stderr.

    ``coarse`` and ``reference`` are (R, n) arrays of final-time nodal
    fields.  The standard error comes from the sample variance of the
    squared distances through the delta method: se(rms) = se(mean d2) / (2 rms).
    """
    coarse = np.atleast_2d(np.asarray(coarse, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if coarse.shape != reference.shape:
        raise ValueError(f"shape mismatch {coarse.shape} vs {reference.shape}")
    if coarse.shape[1] != M.shape[0]:
        raise ValueError("field length does not match the mass matrix")
    d = coarse - reference
    d2 = np.einsum("rn,rn->r", d, (M @ d.T).T)
    rms = float(np.sqrt(d2.mean()))
    R = d2.size
    if R < 2 or rms == 0.0:
        return rms, 0.0
    se_mean = d2.std(ddof=1) / np.sqrt(R)
    return rms, float(se_mean / (2.0 * rms))


def fit_order(dts, errors):
    """Least squares slope of log(error) against log(dt)."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if dts.size != errors.size or dts.size < 2:
        raise ValueError("need at least two (dt, error) pairs")
    if np.any(dts <= 0) or np.any(errors <= 0):
        raise ValueError("dts and errors must be positive")
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


def _guarded_fit(dts, errors, stderrs, beta):
    """Order fit with the pre-asymptotic guard on the largest step."""
    order = list(np.argsort(dts)[::-1])
    use = order
    if len(order) >= 3:
        i0, i1 = order[0], order[1]
        gap = errors[i0] - errors[i1]
        if gap <= 2.0 * np.hypot(stderrs[i0], stderrs[i1]):
            log.info("order fit (beta=%g): dropping pre-asymptotic dt=%g "
                     "(error gap %.3e within 2 stderr)", beta, dts[i0], gap)
            use = order[1:]
    return fit_order([dts[i] for i in use], [errors[i] for i in use])


# ---------------------------------------------------------------------------
# temporal experiment

class _Context:
    """Per-process immutable pieces of one experiment."""

    def __init__(self, config):
        self.config = config
        L1, L2 = config.lengths
        self.mesh = build_mesh(config.grid_nx, config.grid_ny, L1, L2)
        velocity = None
        if config.flow == "darcy":
            perm = build_permeability(self.mesh)
            p = solve_pressure(self.mesh, perm)
            velocity = velocity_from_pressure(self.mesh, perm, p).values
        coeffs = CoefficientField(float(config.diffusion), velocity)
        self.ops = build_operators(self.mesh, coeffs, bc="left-dirichlet",
                                   upwind=config.upwind)
        self.drift = DRIFTS[config.drift]
        self.specs = {
            beta: noise_mod.NoiseSpec(beta=beta, epsilon=config.epsilon,
                                      n1=config.noise_n1, n2=config.noise_n2,
                                      lengths=config.lengths)
            for beta in config.betas}


_WORKER_CTX = None


def _init_worker(config):
    global _WORKER_CTX
    _WORKER_CTX = _Context(config)


def _temporal_task(args):
    beta, r = args
    ctx = _WORKER_CTX
    cfg = ctx.config
    spec = ctx.specs[beta]
    steps = int(round(cfg.final_time / cfg.dt_ref))
    path = noise_mod.sample_path(spec, cfg.dt_ref, steps, cfg.seed, r)
    checksum = hashlib.sha256(path.increments.tobytes()).hexdigest()[:16]
    ref = run_trajectory(0.0, ctx.ops, path, ctx.drift, scheme=cfg.scheme,
                         tol=cfg.matfunc_tol)[0]
    finals = {}
    for dt in cfg.dt_list:
        cpath = noise_mod.coarsen(path, int(round(dt / cfg.dt_ref)))
        fin = run_trajectory(0.0, ctx.ops, cpath, ctx.drift, scheme=cfg.scheme,
                             tol=cfg.matfunc_tol)[0]
        finals[dt] = ctx.ops.embed(fin.u)
    return beta, r, ctx.ops.embed(ref.u), finals, checksum


def _map_tasks(config, task_fn, task_args):
    if config.workers == 1:
        _init_worker(config)
        return [task_fn(a) for a in task_args]
    with multiprocessing.get_context("fork").Pool(
            config.workers, initializer=_init_worker, initargs=(config,)) as pool:
        return pool.map(task_fn, task_args, chunksize=1)


def run_experiment(config):
    """Run the temporal experiment; returns the report and writes nothing.

    Realizations are distributed over ``config.workers`` processes and
    reduced in trajectory order, so the report is independent of the worker
    count.
    """
    config.validate()
    t0 = time.perf_counter()
    for beta in config.betas:
        spec = noise_mod.NoiseSpec(beta=beta, epsilon=config.epsilon,
                                   n1=config.noise_n1, n2=config.noise_n2,
                                   lengths=config.lengths)
        log.info("beta=%g: %d noise modes, truncated trace %.6g",
                 beta, spec.n_modes, noise_mod.truncation_tail(spec))

    tasks = [(beta, r) for beta in config.betas for r in range(config.realizations)]
    results = _map_tasks(config, _temporal_task, tasks)
    results.sort(key=lambda item: (config.betas.index(item[0]), item[1]))

    mesh = build_mesh(config.grid_nx, config.grid_ny, *config.lengths)
    from .assembly import assemble_mass
    M = assemble_mass(mesh)

    rows = []
    fitted = {}
    checksums = {}
    for beta in config.betas:
        chunk = [item for item in results if item[0] == beta]
        refs = np.stack([item[2] for item in chunk])
        checksums[beta] = [item[4] for item in chunk]
        errs, ses = [], []
        for dt in config.dt_list:
            coarse = np.stack([item[3][dt] for item in chunk])
            rms, se = strong_error(coarse, refs, M)
            rows.append(ErrorRow(beta=beta, dt=dt, rms_error=rms, stderr=se,
                                 realizations=config.realizations,
                                 grid_nx=config.grid_nx, grid_ny=config.grid_ny))
            errs.append(rms)
            ses.append(se)
        fitted[beta] = _guarded_fit(np.asarray(config.dt_list), np.asarray(errs),
                                    np.asarray(ses), beta)
        log.info("beta=%g: fitted temporal order %.4f", beta, fitted[beta])

    return ConvergenceReport(
        rows=rows, fitted_orders=fitted, config_fingerprint=config.fingerprint(),
        wall_time=time.perf_counter() - t0,
        diagnostics={"path_checksums": checksums})


# ---------------------------------------------------------------------------
# spatial experiment

def _spatial_task(args):
    beta, r = args
    cfg, meshes, opses, bases = _SPATIAL_CTX
    steps = int(round(cfg.final_time / cfg.dt))
    out = {}
    ref_spec = noise_mod.NoiseSpec(beta=beta, epsilon=cfg.epsilon,
                                   n1=cfg.ref_modes, n2=cfg.ref_modes,
                                   lengths=cfg.lengths)
    ref_path = noise_mod.sample_path(ref_spec, cfg.dt, steps, cfg.seed, r)
    basis = bases[beta]
    draws = _draws_for_basis(basis, ref_spec, ref_path.increments)
    c = np.zeros(basis.n_modes)
    for m in range(steps):
        c = spectral_step(c, basis, cfg.dt, draws[m])
    for nx in cfg.nx_list:
        ops = opses[nx]
        fin = run_trajectory(0.0, ops, ref_path, DRIFTS["none"],
                             tol=cfg.matfunc_tol)[0]
        E = _spectral_node_matrix(meshes[nx], basis)
        d = fin.u - E @ c
        out[nx] = float(d @ (ops.M_free @ d))
    return beta, r, out


def _spectral_node_matrix(mesh, basis):
    key = ("spectral_nodes", basis.n_modes, basis.diffusion)
    E = mesh._cache.get(key)
    if E is None:
        L1, L2 = basis.lengths
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        i = basis.modes[:, 0]
        j = basis.modes[:, 1]
        fx = np.sqrt(2.0 / L1) * np.cos(np.outer(x, i) * (np.pi / L1))
        fx[:, i == 0] = np.sqrt(1.0 / L1)
        fy = np.sqrt(2.0 / L2) * np.cos(np.outer(y, j) * (np.pi / L2))
        fy[:, j == 0] = np.sqrt(1.0 / L2)
        E = fx * fy
        mesh._cache[key] = E
    return E


_SPATIAL_CTX = None


def _init_spatial(config):
    global _SPATIAL_CTX
    meshes = {nx: build_mesh(nx, nx, *config.lengths) for nx in config.nx_list}
    opses = {nx: build_operators(meshes[nx],
                                 CoefficientField.isotropic(config.diffusion),
                                 bc="neumann")
             for nx in config.nx_list}
    bases = {beta: spectral_basis(config.ref_modes, config.ref_modes,
                                  config.lengths, config.diffusion)
             for beta in config.betas}
    _SPATIAL_CTX = (config, meshes, opses, bases)


def spatial_experiment(config):
    """Strong spatial convergence against the spectral reference.

    The CSV/report rows reuse the dt column for the mesh parameter h.
    """
    config.validate()
    t0 = time.perf_counter()
    tasks = [(beta, r) for beta in config.betas for r in range(config.realizations)]
    if config.workers == 1:
        _init_spatial(config)
        results = [_spatial_task(a) for a in tasks]
    else:
        with multiprocessing.get_context("fork").Pool(
                config.workers, initializer=_init_spatial, initargs=(config,)) as pool:
            results = pool.map(_spatial_task, tasks, chunksize=1)
    results.sort(key=lambda item: (config.betas.index(item[0]), item[1]))

    rows = []
    fitted = {}
    for beta in config.betas:
        chunk = [item for item in results if item[0] == beta]
        hs, errs, ses = [], [], []
        for nx in config.nx_list:
            d2 = np.array([item[2][nx] for item in chunk])
            rms = float(np.sqrt(d2.mean()))
            se = 0.0 if (d2.size < 2 or rms == 0.0) else \
                float(d2.std(ddof=1) / np.sqrt(d2.size) / (2.0 * rms))
            h = float(np.hypot(config.lengths[0] / nx, config.lengths[1] / nx))
            rows.append(ErrorRow(beta=beta, dt=h, rms_error=rms, stderr=se,
                                 realizations=config.realizations,
                                 grid_nx=nx, grid_ny=nx))
            hs.append(h)
            errs.append(rms)
            ses.append(se)
        fitted[beta] = _guarded_fit(np.asarray(hs), np.asarray(errs),
                                    np.asarray(ses), beta)
        log.info("beta=%g: fitted spatial order %.4f", beta, fitted[beta])
    return ConvergenceReport(
        rows=rows, fitted_orders=fitted, config_fingerprint=config.fingerprint(),
        wall_time=time.perf_counter() - t0, diagnostics={})


# ---------------------------------------------------------------------------
# CSV artifact

def write_csv(report, config, stream):
    """Fixed-format CSV: data rows then one fitted-order comment per beta."""
    stream.write(CSV_HEADER + "\n")
    for row in report.rows:
        stream.write(f"{row.beta:g},{row.dt:.12g},{row.rms_error:.12e},"
                     f"{row.stderr:.12e},{row.realizations},"
                     f"{row.grid_nx},{row.grid_ny},{config.seed}\n")
    for beta in config.betas:
        stream.write(f"# fitted_order beta={beta:g} "
                     f"order={report.fitted_orders[beta]:.6f}\n")


# ---------------------------------------------------------------------------
# flat key = value configuration files

def _parse_scalar(text, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        if "/" in text:
            num, den = text.split("/", 1)
            return float(num) / float(den)
        return float(text)
    return text


def parse_config_text(text, base=None):
    """Parse ``key = value`` lines into an ExperimentConfig.

    Comments start with '#'.  List values are comma separated; plain
    fractions like 1/16 are accepted for floats.  Unknown keys are errors.
    """
    base = base or ExperimentConfig()
    spec = {f.name: f.type for f in fields(base)}
    tuple_elem = {"betas": float, "dt_list": float, "lengths": float,
                  "nx_list": int}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in spec:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            current = getattr(base, key)
            if isinstance(current, tuple):
                elem = tuple_elem.get(key, float)
                updates[key] = tuple(_parse_scalar(tok, elem)
                                     for tok in value.replace(",", " ").split())
            else:
                updates[key] = _parse_scalar(value, type(current))
        except ConfigError:
            raise
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return replace(base, **updates)


def config_from_file(path, base=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base)
