"""Raw-array form of the discrete generator for the kernel backends.

A ``StructuredOp`` packages the free-node stiffness matrix (CSR arrays) and
a factorization of the free-node mass matrix in a layout both the compiled
and the pure-Python kernels understand: banded Cholesky factors for the
consistent mass (the structured mesh keeps the band narrow), or the inverse
diagonal when the mass is lumped.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = ["StructuredOp"]


class StructuredOp:
    """Matrix data for v -> sign * M^{-1}(K v) in kernel-friendly arrays."""

    def __init__(self, K_csr, n, chol_ab=None, inv_diag=None, sign=-1.0):
        self.n = int(n)
        self.K_csr = K_csr
        self.k_data = np.ascontiguousarray(K_csr.data, dtype=np.float64)
        self.k_indices = np.ascontiguousarray(K_csr.indices, dtype=np.int32)
        self.k_indptr = np.ascontiguousarray(K_csr.indptr, dtype=np.int32)
        self.sign = float(sign)
        self.inv_diag = inv_diag
        if chol_ab is not None:
            # LAPACK upper banded layout, Fortran order for dpbtrs
            self.chol_ab = np.asfortranarray(chol_ab, dtype=np.float64)
            self.kd = int(chol_ab.shape[0] - 1)
        else:
            self.chol_ab = None
            self.kd = 0

    @classmethod
    def from_matrices(cls, K_free, M_free, lumped=False, sign=-1.0):
        n = K_free.shape[0]
        if lumped:
            diag = M_free.diagonal()
            if np.any(diag <= 0):
                raise np.linalg.LinAlgError("lumped mass has a nonpositive entry")
            return cls(sp.csr_matrix(K_free), n, inv_diag=1.0 / diag, sign=sign)
        coo = sp.coo_matrix(M_free)
        upper = coo.row <= coo.col
        rows, cols, vals = coo.row[upper], coo.col[upper], coo.data[upper]
        kd = int((cols - rows).max()) if rows.size else 0
        ab = np.zeros((kd + 1, n))
        ab[kd + rows - cols, cols] = vals
        chol = sla.cholesky_banded(ab, lower=False)
        return cls(sp.csr_matrix(K_free), n, chol_ab=chol, sign=sign)

    def solve_mass(self, b):
        """M^{-1} b using the stored factorization."""
        if self.inv_diag is not None:
            return b * self.inv_diag
        return sla.cho_solve_banded((self.chol_ab, False), b)
