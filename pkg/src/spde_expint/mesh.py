"""Structured triangulations of axis-aligned rectangles.

The solver operates on ``[0, L1] x [0, L2]`` meshed by an nx-by-ny grid of
rectangular cells, each split along its lower-left to upper-right diagonal.
Node numbering is row major (x fastest), triangles are counterclockwise.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "build_mesh", "dump_mesh"]

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2

_TAG_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}


@dataclass
class Mesh:
    """Triangulated rectangle.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array of vertex coordinates.
    triangles : (n_tri, 3) int array of vertex indices, counterclockwise.
    boundary_tags : (n_nodes,) int array; 0 interior, 1 dirichlet (x = 0),
        2 neumann (remaining boundary).
    h : longest edge in the mesh (the cell diagonal).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_tags: np.ndarray
    h: float
    nx: int
    ny: int
    lengths: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def signed_areas(self):
        """Signed area of every triangle (positive for this mesh)."""
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_mesh(nx, ny, L1, L2):
    """Build the structured triangulation of ``[0, L1] x [0, L2]``.

    Each of the nx*ny cells is split along the diagonal from its lower-left
    to its upper-right corner, giving 2*nx*ny triangles on (nx+1)*(ny+1)
    nodes.  Nodes on the edge x = 0 are tagged dirichlet, the rest of the
    boundary neumann.

    Raises
    ------
    ValueError
        If a cell count or side length is not positive.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    if L1 <= 0 or L2 <= 0:
        raise ValueError(f"side lengths must be positive, got L1={L1}, L2={L2}")

    xs = np.linspace(0.0, L1, nx + 1)
    ys = np.linspace(0.0, L2, ny + 1)
    X, Y = np.meshgrid(xs, ys)                    # row major: y slow, x fast
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    ix, iy = ix.ravel(), iy.ravel()
    a = iy * (nx + 1) + ix                        # lower left
    b = a + 1                                     # lower right
    c = b + (nx + 1)                              # upper right
    d = a + (nx + 1)                              # upper left
    lower = np.column_stack([a, b, c])            # below the diagonal a-c
    upper = np.column_stack([a, c, d])            # above it
    triangles = np.vstack([lower, upper]).astype(np.int64)

    tags = np.full(nodes.shape[0], INTERIOR, dtype=np.int64)
    on_left = nodes[:, 0] == 0.0
    on_rest = (nodes[:, 0] == L1) | (nodes[:, 1] == 0.0) | (nodes[:, 1] == L2)
    tags[on_rest] = NEUMANN
    tags[on_left] = DIRICHLET                     # left edge wins at corners

    h = float(np.hypot(L1 / nx, L2 / ny))
    return Mesh(nodes=nodes, triangles=triangles, boundary_tags=tags, h=h,
                nx=nx, ny=ny, lengths=(float(L1), float(L2)))


def dump_mesh(mesh, stream):
    """Write a plain-text debug dump: node list then triangle list."""
    stream.write(f"# mesh nx={mesh.nx} ny={mesh.ny} "
                 f"L1={mesh.lengths[0]!r} L2={mesh.lengths[1]!r} h={mesh.h!r}\n")
    stream.write(f"# nodes {mesh.n_nodes}\n")
    for i, ((x, y), tag) in enumerate(zip(mesh.nodes, mesh.boundary_tags)):
        stream.write(f"{i} {float(x)!r} {float(y)!r} {_TAG_NAMES[tag]}\n")
    stream.write(f"# triangles {mesh.n_triangles}\n")
    for k, (i, j, l) in enumerate(mesh.triangles):
        stream.write(f"{k} {i} {j} {l}\n")
