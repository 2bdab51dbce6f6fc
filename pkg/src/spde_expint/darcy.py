"""Steady Darcy flow across the rectangle, used as the advection field.

Solves -div(k grad p) = 0 with pressure fixed on the two vertical sides
(p = p_in at x = 0, p = p_out at x = L1) and no-flux top and bottom, then
recovers the per-element velocity q = -k grad p.  The permeability is
piecewise constant: a unit background with optional horizontal
high-permeability streaks.

On this structured triangulation the P1 stiffness matrix of a scalar
permeability is an M-matrix (hypotenuse couplings vanish, axis couplings
are nonpositive), so the discrete pressure obeys a maximum principle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import CoefficientField, _grads_and_areas, assemble_bilinear

__all__ = [
    "PermeabilityField",
    "VelocityField",
    "DEFAULT_STREAKS",
    "build_permeability",
    "solve_pressure",
    "velocity_from_pressure",
    "nodal_divergence",
    "boundary_flux",
    "dump_fields",
]

# (y_center, half_width, multiplier) of the default high-permeability
# streaks: three horizontal channels, a thousandfold contrast.
DEFAULT_STREAKS = ((0.5, 0.1, 1000.0), (1.0, 0.1, 1000.0), (1.5, 0.1, 1000.0))


@dataclass
class PermeabilityField:
    """Per-element scalar permeability (positive)."""

    mesh: object
    values: np.ndarray                # (n_triangles,)

    def __post_init__(self):
        if self.values.shape != (self.mesh.n_triangles,):
            raise ValueError("permeability must be per-element")
        if np.any(self.values <= 0):
            raise ValueError("permeability must be positive")


@dataclass
class VelocityField:
    """Per-element constant velocity vectors."""

    mesh: object
    values: np.ndarray                # (n_triangles, 2)


def build_permeability(mesh, base=1.0, streaks=DEFAULT_STREAKS):
    """Unit background times ``base`` with horizontal streak multipliers.

    An element belongs to a streak when its centroid lies within
    ``half_width`` of the streak center in y; overlapping streaks multiply.
    """
    if base <= 0:
        raise ValueError(f"base permeability must be positive, got {base}")
    cy = mesh.nodes[mesh.triangles].mean(axis=1)[:, 1]
    values = np.full(mesh.n_triangles, float(base))
    for center, half_width, mult in streaks or ():
        if half_width <= 0 or mult <= 0:
            raise ValueError("streak half-widths and multipliers must be positive")
        values[np.abs(cy - center) <= half_width] *= mult
    return PermeabilityField(mesh=mesh, values=values)


def _permeability_coeffs(perm):
    n = perm.mesh.n_triangles
    Q = np.zeros((n, 2, 2))
    Q[:, 0, 0] = Q[:, 1, 1] = perm.values
    return CoefficientField(Q)


def solve_pressure(mesh, perm, p_in=1.0, p_out=0.0):
    """Nodal pressure of the cross-flow problem (direct sparse solve)."""
    K = assemble_bilinear(mesh, _permeability_coeffs(perm))
    L1 = mesh.lengths[0]
    x = mesh.nodes[:, 0]
    left = x == 0.0
    right = x == L1
    fixed = left | right
    free = np.flatnonzero(~fixed)

    p = np.zeros(mesh.n_nodes)
    p[left] = p_in
    p[right] = p_out
    rhs = -(K @ p)[free]
    K_ff = sp.csc_matrix(K[free][:, free])
    p[free] = spla.splu(K_ff).solve(rhs)
    return p


def velocity_from_pressure(mesh, perm, p):
    """Per-element q = -k grad p (constant on each triangle)."""
    grads, _ = _grads_and_areas(mesh)
    gp = np.einsum("tv,tvd->td", p[mesh.triangles], grads)
    return VelocityField(mesh=mesh, values=-perm.values[:, None] * gp)


def nodal_divergence(mesh, vel):
    """Weak divergence residual per node: sum_T |T| q_T . grad(phi_i).

    For a velocity derived from a solved pressure this vanishes (to solver
    precision) at every node where the pressure was not prescribed: it is
    the residual of the discrete mass balance on the node's patch.
    """
    grads, areas = _grads_and_areas(mesh)
    contrib = areas[:, None] * np.einsum("td,tvd->tv", vel.values, grads)
    div = np.zeros(mesh.n_nodes)
    np.add.at(div, mesh.triangles.ravel(), contrib.ravel())
    return div


def boundary_flux(mesh, vel, side):
    """Outward flux integral of q through one vertical side ("left"/"right")."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    x_target = 0.0 if side == "left" else mesh.lengths[0]
    nx_out = -1.0 if side == "left" else 1.0
    on_side = mesh.nodes[:, 0] == x_target
    total = 0.0
    for t, tri in enumerate(mesh.triangles):
        mask = on_side[tri]
        if mask.sum() == 2:
            a, b = mesh.nodes[tri[mask]]
            length = abs(a[1] - b[1])
            total += nx_out * vel.values[t, 0] * length
    return total


def dump_fields(perm, vel, stream):
    """Plain-text per-element table: index, centroid, permeability, velocity."""
    cent = perm.mesh.nodes[perm.mesh.triangles].mean(axis=1)
    stream.write("# element cx cy permeability qx qy\n")
    for t in range(perm.mesh.n_triangles):
        stream.write(f"{t} {float(cent[t, 0])!r} {float(cent[t, 1])!r} "
                     f"{float(perm.values[t])!r} {float(vel.values[t, 0])!r} "
                     f"{float(vel.values[t, 1])!r}\n")
