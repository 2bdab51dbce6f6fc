"""P1 finite element assembly on structured triangulations.

Builds the mass matrix, the bilinear-form matrix for an advection-diffusion
operator, and the reduced free-node system used by the time integrators.
The operator is

    A u = div(Q grad u) - velocity . grad u

with a symmetric positive definite tensor Q and an optional velocity field,
so the assembled form is a(u, chi) = (Q grad u, grad chi) + (velocity .
grad u, chi) and the discrete generator acts as v -> -M^{-1} K v.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CoercivityError
from .mesh import DIRICHLET
from .structured import StructuredOp

__all__ = [
    "CoefficientField",
    "DiscreteOperators",
    "assemble_mass",
    "assemble_bilinear",
    "build_operators",
    "project_l2",
    "l2_load",
    "apply_Ah",
    "dump_matrix",
    "triangle_quadrature",
]


class CoefficientField:
    """Diffusion tensor and advection velocity for the assembly routines.

    Parameters
    ----------
    diffusion : scalar, (2, 2) array, or callable (x, y) -> scalar or (2, 2).
        Scalars mean isotropic diffusion d * I.
    velocity : None, (2,) array, or callable (x, y) -> (2,) array.
        Callables are evaluated at element centroids (the per-element
        constant is exact for P1 gradients).
    """

    def __init__(self, diffusion, velocity=None):
        self.diffusion = diffusion
        self.velocity = velocity

    @classmethod
    def isotropic(cls, d0, velocity=None):
        return cls(float(d0), velocity)

    def element_tensors(self, mesh):
        """Per-element (n_tri, 2, 2) diffusion tensors at centroids."""
        n = mesh.n_triangles
        q = self.diffusion
        if callable(q):
            cent = mesh.nodes[mesh.triangles].mean(axis=1)
            out = np.empty((n, 2, 2))
            for k, (x, y) in enumerate(cent):
                qk = np.asarray(q(x, y), dtype=float)
                out[k] = qk * np.eye(2) if qk.ndim == 0 else qk
            return out
        q = np.asarray(q, dtype=float)
        if q.ndim == 0:
            out = np.zeros((n, 2, 2))
            out[:, 0, 0] = out[:, 1, 1] = float(q)
            return out
        if q.shape == (2, 2):
            return np.broadcast_to(q, (n, 2, 2)).copy()
        if q.shape == (n, 2, 2):
            return q.copy()
        raise ValueError(f"diffusion must be scalar, (2,2), or per-element, got shape {q.shape}")

    def element_velocity(self, mesh):
        """Per-element (n_tri, 2) velocities at centroids, or None."""
        v = self.velocity
        if v is None:
            return None
        n = mesh.n_triangles
        if callable(v):
            cent = mesh.nodes[mesh.triangles].mean(axis=1)
            out = np.empty((n, 2))
            for k, (x, y) in enumerate(cent):
                out[k] = np.asarray(v(x, y), dtype=float)
            return out
        v = np.asarray(v, dtype=float)
        if v.shape == (2,):
            return np.broadcast_to(v, (n, 2)).copy()
        if v.shape == (n, 2):
            return v.copy()
        raise ValueError(f"velocity must be (2,) or per-element, got shape {v.shape}")


def _grads_and_areas(mesh):
    """Barycentric basis gradients (n_tri, 3, 2) and areas (n_tri,)."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]       # 2 * signed area
    if np.any(area2 <= 0):
        raise ValueError("mesh contains a degenerate or misoriented triangle")
    edges = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / area2[:, None, None]
    return grads, 0.5 * area2


def _accumulate(mesh, local):
    """Scatter (n_tri, 3, 3) element blocks into a CSR matrix."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.n_nodes, mesh.n_nodes))
    return A.tocsr()


def assemble_mass(mesh, lumped=False):
    """Assemble the P1 mass matrix (CSR).

    The exact local block is area/12 * [[2,1,1],[1,2,1],[1,1,2]]; with
    ``lumped`` the row-sum lumped diagonal (area/3 per vertex) is returned
    instead.
    """
    _, areas = _grads_and_areas(mesh)
    if lumped:
        diag = np.zeros(mesh.n_nodes)
        np.add.at(diag, mesh.triangles.ravel(),
                  np.repeat(areas / 3.0, 3))
        return sp.diags(diag).tocsr()
    block = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = areas[:, None, None] * block
    return _accumulate(mesh, local)


def assemble_bilinear(mesh, coeffs, upwind=False):
    """Assemble K with K_ij = (Q grad phi_j, grad phi_i) + (v . grad phi_j, phi_i).

    Diffusion tensors are checked for positive definiteness element by
    element (symmetric part eigenvalues), raising ``CoercivityError`` on
    failure.  With ``upwind`` the centered advection matrix C is replaced by
    C + D where D is the least nonnegative symmetric artificial diffusion
    making all off-diagonal entries of the advection part nonpositive
    (edge-upwinded flux on the node graph).  D has zero row sums, so
    constants stay in the kernel of the advection part.
    """
    grads, areas = _grads_and_areas(mesh)
    Q = coeffs.element_tensors(mesh)

    Qs = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    tr = Qs[:, 0, 0] + Qs[:, 1, 1]
    det = Qs[:, 0, 0] * Qs[:, 1, 1] - Qs[:, 0, 1] * Qs[:, 1, 0]
    # 2x2 symmetric positive definite iff trace > 0 and determinant > 0
    # (product form avoids the cancellation in the explicit eigenvalue)
    bad = (tr <= 0.0) | (det <= 0.0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        maxeig = 0.5 * (tr[k] + np.sqrt(max(tr[k] * tr[k] - 4.0 * det[k], 0.0)))
        mineig = det[k] / maxeig if maxeig > 0 else tr[k]
        raise CoercivityError(
            f"diffusion tensor not positive definite on element {k} "
            f"(min eigenvalue {mineig:.3e})")

    flux = np.einsum("tab,tjb->tja", Q, grads)               # Q grad(phi_j)
    local = areas[:, None, None] * np.einsum("tja,tia->tij", flux, grads)
    K = _accumulate(mesh, local)

    vel = coeffs.element_velocity(mesh)
    if vel is not None:
        # centered: C_ij = (v . grad phi_j) * integral(phi_i) = (v.g_j) area/3
        vdotg = np.einsum("ta,tja->tj", vel, grads)
        localc = np.repeat((areas / 3.0)[:, None, None] * vdotg[:, None, :],
                           3, axis=1)
        C = _accumulate(mesh, localc)
        if upwind:
            P = C.maximum(C.T)
            P.data = np.maximum(P.data, 0.0)
            P = sp.csr_matrix(P)
            P.setdiag(0.0)
            P.eliminate_zeros()
            D = sp.diags(np.asarray(P.sum(axis=1)).ravel()) - P
            C = C + D
        K = K + C
    return sp.csr_matrix(K)


@dataclass
class DiscreteOperators:
    """Assembled matrices plus the free-node reduction.

    ``M`` and ``K`` are full-node CSR matrices.  ``free_nodes`` maps the
    reduced index to the full node index and ``full_to_free`` inverts it
    (-1 on constrained nodes).  ``dirichlet_lift`` is the nodal indicator of
    the constrained set (value 1 there), and ``boundary_forcing`` the
    constant free-node vector -(K g)|_free it induces in the evolution.
    """

    mesh: object
    coeffs: CoefficientField
    M: sp.csr_matrix
    K: sp.csr_matrix
    dirichlet_lift: np.ndarray
    free_nodes: np.ndarray
    full_to_free: np.ndarray
    M_free: sp.csr_matrix
    K_free: sp.csr_matrix
    boundary_forcing: np.ndarray
    structured: StructuredOp
    bc: str
    upwind: bool
    lumped: bool
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_free(self):
        return self.free_nodes.size

    def embed(self, u_free):
        """Free-node vector -> full nodal field including the lifting."""
        x = self.dirichlet_lift.astype(float).copy()
        x[self.free_nodes] = u_free
        return x

    def restrict(self, x_full):
        return np.asarray(x_full)[self.free_nodes]

    def mass_solve_free(self, b):
        """M_free^{-1} b via the cached factorization."""
        return self.structured.solve_mass(b)


def build_operators(mesh, coeffs, bc="left-dirichlet", upwind=False, lumped=False):
    """Assemble matrices and the reduced system for one configuration.

    ``bc`` selects the essential boundary: "left-dirichlet" pins the nodes
    on x = 0 (the mesh's dirichlet tag) at value 1 through the lifting,
    "neumann" leaves every node free (pure natural boundary).
    """
    if bc not in ("left-dirichlet", "neumann"):
        raise ValueError(f"unknown bc mode {bc!r}")
    M = assemble_mass(mesh, lumped=lumped)
    K = assemble_bilinear(mesh, coeffs, upwind=upwind)

    n = mesh.n_nodes
    if bc == "left-dirichlet":
        constrained = mesh.boundary_tags == DIRICHLET
    else:
        constrained = np.zeros(n, dtype=bool)
    free = np.flatnonzero(~constrained)
    full_to_free = np.full(n, -1, dtype=np.int64)
    full_to_free[free] = np.arange(free.size)

    lift = constrained.astype(float)
    M_f = sp.csr_matrix(M[free][:, free])
    K_f = sp.csr_matrix(K[free][:, free])
    forcing = -(K @ lift)[free]

    structured = StructuredOp.from_matrices(K_f, M_f, lumped=lumped)
    return DiscreteOperators(
        mesh=mesh, coeffs=coeffs, M=M, K=K, dirichlet_lift=lift,
        free_nodes=free, full_to_free=full_to_free, M_free=M_f, K_free=K_f,
        boundary_forcing=forcing, structured=structured, bc=bc,
        upwind=upwind, lumped=lumped)


def apply_Ah(ops, v):
    """Discrete generator action A_h v = -M_free^{-1} (K_free v)."""
    from .backend import kernels
    v = np.asarray(v, dtype=float)
    if v.shape != (ops.n_free,):
        raise ValueError(f"expected free-node vector of length {ops.n_free}, "
                         f"got shape {v.shape}")
    return kernels.apply_structured(ops.structured, v)


def project_l2(M, load):
    """Solve M c = load (L2 projection onto the P1 space)."""
    load = np.asarray(load, dtype=float)
    if load.shape[0] != M.shape[0]:
        raise ValueError("load vector length does not match the mass matrix")
    return spla.spsolve(sp.csc_matrix(M), load)


# ---------------------------------------------------------------------------
# quadrature helpers (used for load vectors and as test oracles)

# 7-point symmetric rule, exact for polynomials of degree 5.
_QP_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [0.797426985353087, 0.101286507323456, 0.101286507323456],
    [0.101286507323456, 0.797426985353087, 0.101286507323456],
    [0.101286507323456, 0.101286507323456, 0.797426985353087],
    [0.059715871789770, 0.470142064105115, 0.470142064105115],
    [0.470142064105115, 0.059715871789770, 0.470142064105115],
    [0.470142064105115, 0.470142064105115, 0.059715871789770],
])
_QP_W = np.array([0.225,
                  0.125939180544827, 0.125939180544827, 0.125939180544827,
                  0.132394152788506, 0.132394152788506, 0.132394152788506])


def triangle_quadrature(mesh):
    """Quadrature points (n_tri, 7, 2) and weights (n_tri, 7) (area scaled)."""
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qb,tbd->tqd", _QP_BARY, p)
    _, areas = _grads_and_areas(mesh)
    return pts, areas[:, None] * _QP_W[None, :]


def l2_load(mesh, fn):
    """Load vector (fn, phi_i) by 7-point quadrature per element."""
    pts, w = triangle_quadrature(mesh)
    vals = fn(pts[..., 0], pts[..., 1])
    contrib = w[:, :, None] * vals[:, :, None] * _QP_BARY[None, :, :]
    load = np.zeros(mesh.n_nodes)
    np.add.at(load, mesh.triangles.ravel(), contrib.sum(axis=1).ravel())
    return load


def dump_matrix(A, stream, name="matrix"):
    """Plain-text dump in coordinate format (row col value per line)."""
    coo = sp.coo_matrix(A)
    stream.write(f"# {name} shape={coo.shape[0]}x{coo.shape[1]} nnz={coo.nnz}\n")
    for i, j, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{i} {j} {float(v)!r}\n")
