"""Time stepping for the semilinear problem on the free nodes.

With the Dirichlet lifting X = u + g (g the nodal indicator of the pinned
boundary) the semidiscrete system on the free nodes reads

    du = [A_h u + b + f(u + g)] dt + d(P_h W),      A_h = -M^{-1} K,

where b = -M^{-1}(K g) collects the boundary coupling and f acts nodewise
(the drift load is the interpolant of F(X)).  Two schemes are provided:

* stochastic exponential Euler, one phi1 action per step:
      u_m = z + dt * phi1(dt A_h) [A_h z + b + f(u_{m-1})],
      z = u_{m-1} + dW_m;
  algebraically this equals exp(dt A_h)(u_{m-1} + dW_m) plus the
  variation-of-constants drift term, but needs no inverse of A_h;
* linearly implicit (semi-implicit) Euler as the comparison baseline:
      (M + dt K) u_m = M (u_{m-1} + dW_m) + dt [M f(u_{m-1}) - K g].

Noise increments and drift values on the pinned nodes are discarded; those
nodes stay at the lifting value 1.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import noise as noise_mod
from .backend import kernels
from .errors import NumericalError
from .matfunc import OperatorHandle, phi1_action

__all__ = [
    "TrajectoryState",
    "DriftSpec",
    "DRIFTS",
    "drift_eval",
    "exp_euler_step",
    "semi_implicit_step",
    "run_trajectory",
    "write_snapshot",
]


@dataclass
class TrajectoryState:
    """Solution after ``step_index`` steps of size dt (t = step_index * dt)."""

    step_index: int
    t: float
    u: np.ndarray                     # free-node coefficients


@dataclass(frozen=True)
class DriftSpec:
    """Nodewise drift: a vectorized map plus its Lipschitz constant."""

    name: str
    fn: object
    lipschitz_bound: float


def _kink(x):
    # -max(0, 1 - 2x): pulls the field up below 1/2, shuts off above
    return np.minimum(0.0, 2.0 * x - 1.0)


DRIFTS = {
    "none": DriftSpec(name="none", fn=lambda x: np.zeros_like(x), lipschitz_bound=0.0),
    "kink": DriftSpec(name="kink", fn=_kink, lipschitz_bound=2.0),
}


def drift_eval(drift, x):
    """Nodewise drift values f(x) (vectorized over the nodal field)."""
    return drift.fn(np.asarray(x, dtype=float))


def _boundary_drift(ops):
    b = ops._cache.get("boundary_drift")
    if b is None:
        b = ops.structured.solve_mass(ops.boundary_forcing)
        ops._cache["boundary_drift"] = b
    return b


def _drift_free(ops, drift, u):
    x = ops.embed(u)
    return drift_eval(drift, x)[ops.free_nodes]


def exp_euler_step(state, ops, drift, dW_free, dt, tol=1e-8, m_max=64):
    """One stochastic exponential Euler step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    handle = OperatorHandle.from_operators(ops)
    z = state.u + dW_free
    w = kernels.apply_structured(ops.structured, z) + _boundary_drift(ops) \
        + _drift_free(ops, drift, state.u)
    u = z + dt * phi1_action(handle, w, dt, tol=tol, m_max=m_max).value
    return TrajectoryState(step_index=state.step_index + 1,
                           t=(state.step_index + 1) * dt, u=u)


def _si_factor(ops, dt):
    key = ("si_factor", float(dt))
    fac = ops._cache.get(key)
    if fac is None:
        fac = spla.splu(sp.csc_matrix(ops.M_free + dt * ops.K_free))
        ops._cache[key] = fac
    return fac


def semi_implicit_step(state, ops, drift, dW_free, dt):
    """One linearly implicit Euler step (drift and noise explicit)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    fac = _si_factor(ops, dt)
    rhs = ops.M_free @ (state.u + dW_free) \
        + dt * (ops.M_free @ _drift_free(ops, drift, state.u) + ops.boundary_forcing)
    u = fac.solve(rhs)
    return TrajectoryState(step_index=state.step_index + 1,
                           t=(state.step_index + 1) * dt, u=u)


def run_trajectory(x0, ops, path, drift, scheme="expeuler", record_at=None,
                   tol=1e-8, m_max=64):
    """Advance one path over its full horizon, recording requested times.

    ``x0`` is a free-node vector (or a scalar broadcast to one).  Returns
    the list of ``TrajectoryState`` at ``record_at`` (default: final time
    only).  Record times must sit on the path's time grid.
    """
    if scheme not in ("expeuler", "semiimplicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    dt = path.dt
    steps = path.steps
    T = path.final_time
    if record_at is None:
        record_at = (T,)
    record_steps = []
    for t in record_at:
        k = int(round(t / dt))
        if not (0 <= k <= steps) or abs(k * dt - t) > 1e-9 * max(1.0, T):
            raise ValueError(f"record time {t} is not on the path grid (dt={dt})")
        record_steps.append(k)

    u = np.full(ops.n_free, float(x0)) if np.ndim(x0) == 0 else np.asarray(x0, dtype=float).copy()
    if u.shape != (ops.n_free,):
        raise ValueError(f"x0 must have {ops.n_free} free-node entries")

    if scheme == "expeuler":
        # drop adaptive hints so each trajectory's arithmetic is independent
        # of what ran before it in this process (exact reproducibility for
        # any worker layout); factorizations and propagators are
        # value-deterministic and stay cached
        handle = OperatorHandle.from_operators(ops)
        for key in [k for k in handle._cache
                    if isinstance(k, tuple) and str(k[0]).startswith("hint_")]:
            del handle._cache[key]

    E_free = noise_mod.mode_matrix(ops.mesh, path.spec)[ops.free_nodes]
    fields = path.increments @ E_free.T          # (steps, n_free)

    state = TrajectoryState(step_index=0, t=0.0, u=u)
    records = {}
    if 0 in record_steps:
        records[0] = state
    try:
        for m in range(steps):
            if scheme == "expeuler":
                state = exp_euler_step(state, ops, drift, fields[m], dt,
                                       tol=tol, m_max=m_max)
            else:
                state = semi_implicit_step(state, ops, drift, fields[m], dt)
            if state.step_index in record_steps:
                records[state.step_index] = state
    except NumericalError as exc:
        raise NumericalError(
            f"trajectory {path.trajectory_id} failed at step {state.step_index + 1} "
            f"(dt={dt}, scheme={scheme}): {exc}") from exc
    return [records[k] for k in record_steps]


def write_snapshot(state, ops, stream, trajectory_id=None):
    """Plain-text nodal table of the full field at one recorded time."""
    x = ops.embed(state.u)
    stream.write(f"# snapshot trajectory={trajectory_id!r} t={state.t!r} "
                 f"step={state.step_index}\n")
    for i, ((px, py), v) in enumerate(zip(ops.mesh.nodes, x)):
        stream.write(f"{i} {float(px)!r} {float(py)!r} {float(v)!r}\n")
