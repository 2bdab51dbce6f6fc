#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

Three workloads on a 32 x 32 left-Dirichlet mesh (1056 free nodes, firmly
in the Krylov regime): the raw structured-operator apply, single
exponential Euler steps, and a full 128-step trajectory driven by sampled
Q-Wiener increments.  Without arguments the script runs itself twice in
subprocesses (the second with SPDE_EXPINT_PURE_PY=1) and prints the
comparison table; with --json it runs the workloads in-process and emits
one JSON record for whichever backend is active.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def measure():
    from spde_expint.assembly import CoefficientField, build_operators
    from spde_expint.backend import kernel_backend, kernels
    from spde_expint.integrator import DRIFTS, TrajectoryState, exp_euler_step, run_trajectory
    from spde_expint.mesh import build_mesh
    from spde_expint.noise import NoiseSpec, sample_path

    mesh = build_mesh(32, 32, 2.0, 2.0)
    ops = build_operators(mesh, CoefficientField.isotropic(5.0),
                          bc="left-dirichlet")
    sop = ops.structured
    rng = np.random.default_rng(0)
    x = rng.standard_normal(ops.n_free)

    reps = 3000
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            kernels.apply_structured(sop, x)
        best = min(best, (time.perf_counter() - t0) / reps)
    apply_us = best * 1e6

    drift = DRIFTS["kink"]
    dt = 1.0 / 64
    spec = NoiseSpec(beta=2.0, n1=64, n2=64)
    path = sample_path(spec, dt, 128, seed=7, trajectory_id=0)

    state = TrajectoryState(0, 0.0, rng.standard_normal(ops.n_free))
    dWf = 0.05 * rng.standard_normal(ops.n_free)
    for _ in range(5):                       # warm the Krylov hint cache
        exp_euler_step(state, ops, drift, dWf, dt)
    t0 = time.perf_counter()
    nstep = 50
    for _ in range(nstep):
        state = exp_euler_step(state, ops, drift, dWf, dt)
    step_ms = (time.perf_counter() - t0) / nstep * 1e3

    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        run_trajectory(0.0, ops, path, drift)
        best = min(best, time.perf_counter() - t0)
    traj_s = best

    return {"backend": kernel_backend(), "apply_us": apply_us,
            "step_ms": step_ms, "traj_s": traj_s}


def run_child(pure):
    env = dict(os.environ)
    env.pop("SPDE_EXPINT_PURE_PY", None)
    if pure:
        env["SPDE_EXPINT_PURE_PY"] = "1"
    out = subprocess.run([sys.executable, os.path.abspath(__file__), "--json"],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--json", action="store_true",
                        help="run in-process and print one JSON record")
    args = parser.parse_args(argv)
    if args.json:
        print(json.dumps(measure()))
        return 0

    fast = run_child(pure=False)
    slow = run_child(pure=True)
    if fast["backend"] == slow["backend"]:
        print("extension not built; both passes used the numpy fallback")
    rows = [("structured apply", "apply_us", "us"),
            ("exponential Euler step", "step_ms", "ms"),
            ("128-step trajectory", "traj_s", "s")]
    print(f"{'workload':<26}{fast['backend']:>12}{slow['backend']:>12}"
          f"{'speedup':>10}")
    for label, key, unit in rows:
        ratio = slow[key] / fast[key]
        print(f"{label:<26}{fast[key]:>9.2f} {unit:<2}"
              f"{slow[key]:>9.2f} {unit:<2}{ratio:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
