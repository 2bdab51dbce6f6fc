"""Additive Q-Wiener noise on the rectangle, expanded in cosine modes.

The covariance eigenpairs are the Neumann cosine basis

    e_0(x) = sqrt(1/L),   e_i(x) = sqrt(2/L) cos(i pi x / L),   i >= 1

tensorized over the two axes, with eigenvalues

    lambda_(i,j) = (i^2 + j^2)^-(beta + eps).

The (0,0) mode is excluded by default (the power law is undefined there);
enabling ``include_zero_mode`` assigns it unit variance by convention.

Sampling is reproducible and order-independent: the Gaussian stream of mode
(i, j) of trajectory ``trajectory_id`` is keyed by the tuple
(seed, trajectory_id, i, j), so any subset of modes, any number of workers,
and any evaluation order produce bitwise identical draws.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

__all__ = [
    "NoiseSpec",
    "WienerPath",
    "eigenvalue",
    "eigenvalues",
    "eigenfunction",
    "mode_matrix",
    "truncation_tail",
    "sample_path",
    "coarsen",
    "increment_field",
    "write_path",
    "read_path",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance description: decay exponent and truncation bounds."""

    beta: float
    epsilon: float = 1e-3
    n1: int = 64
    n2: int = 64
    lengths: tuple = (2.0, 2.0)
    include_zero_mode: bool = False

    def __post_init__(self):
        if not (0.0 < self.beta <= 2.0):
            raise ValueError(f"beta must lie in (0, 2], got {self.beta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("truncation bounds must be at least 1")
        if self.lengths[0] <= 0 or self.lengths[1] <= 0:
            raise ValueError("side lengths must be positive")

    def modes(self):
        """Active modes as an (n_modes, 2) int array, (i, j) lexicographic."""
        i, j = np.meshgrid(np.arange(self.n1 + 1), np.arange(self.n2 + 1),
                           indexing="ij")
        modes = np.column_stack([i.ravel(), j.ravel()])
        if not self.include_zero_mode:
            modes = modes[1:]                     # first entry is (0, 0)
        return modes

    @property
    def n_modes(self):
        return (self.n1 + 1) * (self.n2 + 1) - (0 if self.include_zero_mode else 1)


def eigenvalue(spec, i, j):
    """Covariance eigenvalue of mode (i, j)."""
    if i < 0 or j < 0 or i > spec.n1 or j > spec.n2:
        raise ValueError(f"mode ({i}, {j}) outside the truncation range")
    if i == 0 and j == 0:
        if not spec.include_zero_mode:
            raise ValueError("mode (0, 0) is excluded: the eigenvalue power "
                             "law is undefined at zero frequency")
        return 1.0
    return float(i * i + j * j) ** -(spec.beta + spec.epsilon)


def eigenvalues(spec):
    """Eigenvalues for all active modes in spec.modes() order."""
    m = spec.modes()
    r2 = (m[:, 0] ** 2 + m[:, 1] ** 2).astype(float)
    lam = np.empty(len(m))
    zero = r2 == 0.0
    lam[~zero] = r2[~zero] ** -(spec.beta + spec.epsilon)
    lam[zero] = 1.0
    return lam


def eigenfunction(spec, i, j, x, y):
    """Value of mode (i, j) at points (x, y) (broadcasting)."""
    L1, L2 = spec.lengths
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = np.sqrt(2.0 / L1) * np.cos(i * np.pi * x / L1) if i \
        else np.full(x.shape, np.sqrt(1.0 / L1))
    fy = np.sqrt(2.0 / L2) * np.cos(j * np.pi * y / L2) if j \
        else np.full(y.shape, np.sqrt(1.0 / L2))
    return fx * fy


def mode_matrix(mesh, spec):
    """Mode values at mesh nodes, shape (n_nodes, n_modes); cached per mesh."""
    key = ("mode_matrix", spec.n1, spec.n2, spec.lengths, spec.include_zero_mode)
    E = mesh._cache.get(key)
    if E is None:
        L1, L2 = spec.lengths
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        i = np.arange(spec.n1 + 1)
        j = np.arange(spec.n2 + 1)
        Ex = np.sqrt(2.0 / L1) * np.cos(np.outer(x, i) * (np.pi / L1))
        Ex[:, 0] = np.sqrt(1.0 / L1)
        Ey = np.sqrt(2.0 / L2) * np.cos(np.outer(y, j) * (np.pi / L2))
        Ey[:, 0] = np.sqrt(1.0 / L2)
        m = spec.modes()
        E = Ex[:, m[:, 0]] * Ey[:, m[:, 1]]
        mesh._cache[key] = E
    return E


def truncation_tail(spec):
    """Total variance carried by the active modes, sum of eigenvalues."""
    return float(eigenvalues(spec).sum())


@dataclass
class WienerPath:
    """Increments of the truncated expansion on a uniform time grid.

    ``increments[m, k]`` is the integral of sqrt(lambda_k) dbeta_k over
    (m dt, (m+1) dt]; nodal fields come from ``increment_field``.
    """

    spec: NoiseSpec
    dt: float
    increments: np.ndarray            # (steps, n_modes)
    seed: int
    trajectory_id: int

    @property
    def steps(self):
        return self.increments.shape[0]

    @property
    def final_time(self):
        return self.steps * self.dt


def sample_path(spec, dt, steps, seed, trajectory_id):
    """Draw one truncated Q-Wiener path on a uniform grid of ``steps`` steps.

    Per-step mode increments are N(0, lambda * dt), each mode fed by its own
    counter-based stream keyed by (seed, trajectory_id, i, j).
    """
    if dt <= 0 or steps < 1:
        raise ValueError("dt must be positive and steps at least 1")
    modes = spec.modes()
    lam = eigenvalues(spec)
    out = np.empty((steps, len(modes)))
    scale = np.sqrt(lam * dt)
    for k, (i, j) in enumerate(modes):
        ss = SeedSequence(seed, spawn_key=(int(trajectory_id), int(i), int(j)))
        out[:, k] = Generator(Philox(ss)).standard_normal(steps)
    out *= scale
    return WienerPath(spec=spec, dt=float(dt), increments=out,
                      seed=int(seed), trajectory_id=int(trajectory_id))


def _prime_factors(n):
    out = []
    p = 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out.append(n)
    return out


def coarsen(path, factor):
    """Sum consecutive fine increments into blocks of ``factor``.

    Block sums are evaluated by halving passes for every factor of two and
    left-to-right sweeps for odd prime factors (ascending).  Coarsening by
    f1*f2 is therefore bitwise identical to coarsening by f1 then f2 along
    the power-of-two refinement chains the harness uses.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"coarsening factor must be >= 1, got {factor}")
    if path.steps % factor != 0:
        raise ValueError(f"factor {factor} does not divide {path.steps} steps")
    if factor == 1:
        return WienerPath(spec=path.spec, dt=path.dt,
                          increments=path.increments.copy(),
                          seed=path.seed, trajectory_id=path.trajectory_id)
    arr = path.increments
    for p in sorted(_prime_factors(factor)):
        if p == 2:
            arr = arr[0::2] + arr[1::2]
        else:
            acc = arr[0::p].copy()
            for k in range(1, p):
                acc = acc + arr[k::p]
            arr = acc
    return WienerPath(spec=path.spec, dt=path.dt * factor, increments=arr,
                      seed=path.seed, trajectory_id=path.trajectory_id)


def increment_field(draws, mesh, spec):
    """Nodal values of the expansion for one or many sets of mode draws.

    ``draws`` has shape (n_modes,) or (k, n_modes); the result is (n_nodes,)
    or (k, n_nodes).
    """
    E = mode_matrix(mesh, spec)
    draws = np.asarray(draws)
    if draws.shape[-1] != E.shape[1]:
        raise ValueError(f"expected {E.shape[1]} mode draws, got {draws.shape[-1]}")
    return draws @ E.T


# ---------------------------------------------------------------------------
# binary path dumps (replay format)

_MAGIC = b"WPATH\x00"
_VERSION = 1
_HEADER = struct.Struct("<6sHqqddiiddBxdq")


def write_path(path, stream):
    """Binary dump: fixed little-endian header, then step-major float64."""
    spec = path.spec
    stream.write(_HEADER.pack(
        _MAGIC, _VERSION, path.seed, path.trajectory_id,
        spec.beta, spec.epsilon, spec.n1, spec.n2,
        spec.lengths[0], spec.lengths[1], int(spec.include_zero_mode),
        path.dt, path.steps))
    stream.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def read_path(stream):
    head = stream.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated path header")
    (magic, version, seed, traj, beta, eps, n1, n2, L1, L2, zero,
     dt, steps) = _HEADER.unpack(head)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not a path dump (bad magic or version)")
    spec = NoiseSpec(beta=beta, epsilon=eps, n1=n1, n2=n2, lengths=(L1, L2),
                     include_zero_mode=bool(zero))
    payload = stream.read(steps * spec.n_modes * 8)
    data = np.frombuffer(payload, dtype="<f8").reshape(steps, spec.n_modes)
    return WienerPath(spec=spec, dt=dt, increments=data.astype(np.float64),
                      seed=seed, trajectory_id=traj)
