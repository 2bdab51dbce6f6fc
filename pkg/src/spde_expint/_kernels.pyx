# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the hot loops: structured operator application and
Arnoldi extension.

Contracts match ``spde_expint._kernels_py`` (the reference semantics); the
mass solve goes straight to LAPACK's banded triangular solver and the
orthogonalization to BLAS level 2.
"""

import numpy as np

from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport ddot, dgemv, dnrm2
from scipy.linalg.cython_lapack cimport dpbtrs

BACKEND_NAME = "compiled"


cdef void _csr_matvec(double[::1] data, int[::1] indices, int[::1] indptr,
                      double[::1] x, double[::1] y, int n) noexcept nogil:
    cdef int i, p
    cdef double s
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        y[i] = s


cdef int _generator_into(double[::1] k_data, int[::1] k_indices,
                         int[::1] k_indptr, double[::1, :] chol_ab, int kd,
                         bint banded, double[::1] inv_diag, double sign,
                         double[::1] x, double[::1] y, int n,
                         bint augmented, double[::1] aug) noexcept nogil:
    """y[:n] = sign * M^{-1}(K x[:n]) (+ x[n] * aug, y[n] = 0 if augmented)."""
    cdef int i, nrhs = 1, ldab = kd + 1, info = 0
    cdef char uplo = b'U'
    cdef double xn
    _csr_matvec(k_data, k_indices, k_indptr, x, y, n)
    if banded:
        dpbtrs(&uplo, &n, &kd, &nrhs, &chol_ab[0, 0], &ldab, &y[0], &n, &info)
        if info != 0:
            return info
    else:
        for i in range(n):
            y[i] *= inv_diag[i]
    for i in range(n):
        y[i] *= sign
    if augmented:
        xn = x[n]
        for i in range(n):
            y[i] += xn * aug[i]
        y[n] = 0.0
    return 0


def apply_structured(sop, x, aug=None):
    """Apply the structured generator, optionally in augmented form.

    Plain form (aug None): returns sign * M^{-1}(K x).
    Augmented form: x has length n+1 and the result is
    [sign * M^{-1}(K x[:n]) + x[n] * aug, 0], the phi1 embedding.
    """
    cdef int n = sop.n
    cdef double[::1] k_data = sop.k_data
    cdef int[::1] k_indices = sop.k_indices
    cdef int[::1] k_indptr = sop.k_indptr
    cdef double sign = sop.sign
    cdef bint augmented = aug is not None
    cdef bint banded = sop.inv_diag is None
    cdef double[::1, :] chol_ab
    cdef double[::1] inv_diag
    cdef int kd = 0
    cdef double[::1] dummy = np.empty(0)
    if banded:
        chol_ab = sop.chol_ab
        kd = sop.kd
        inv_diag = dummy
    else:
        inv_diag = np.ascontiguousarray(sop.inv_diag, dtype=np.float64)
        chol_ab = np.empty((1, 1), order="F")

    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] augv = dummy
    if augmented:
        augv = np.ascontiguousarray(aug, dtype=np.float64)
        if xv.shape[0] != n + 1 or augv.shape[0] != n:
            raise ValueError("augmented apply needs len(x) == n + 1 and len(aug) == n")
    elif xv.shape[0] != n:
        raise ValueError(f"vector length {xv.shape[0]} does not match operator size {n}")

    out = np.empty(n + 1 if augmented else n)
    cdef double[::1] yv = out
    cdef int info = _generator_into(k_data, k_indices, k_indptr, chol_ab, kd,
                                    banded, inv_diag, sign, xv, yv, n,
                                    augmented, augv)
    if info != 0:
        raise RuntimeError(f"banded triangular solve failed (info={info})")
    return out


def arnoldi_extend(sop, aug, V, H, j_start, j_end):
    """Grow an Arnoldi basis of the structured operator in place.

    Same contract as the pure-Python kernel: steps j_start .. j_end-1, CGS
    with a second pass, returns (j_stop, happy).
    """
    cdef double[:, ::1] Vv = V
    cdef double[:, ::1] Hv = H
    cdef int nv = Vv.shape[1]
    cdef int n = sop.n
    cdef double[::1] k_data = sop.k_data
    cdef int[::1] k_indices = sop.k_indices
    cdef int[::1] k_indptr = sop.k_indptr
    cdef double sign = sop.sign
    cdef bint augmented = aug is not None
    cdef bint banded = sop.inv_diag is None
    cdef double[::1, :] chol_ab
    cdef double[::1] inv_diag
    cdef int kd = 0
    cdef double[::1] dummy = np.empty(0)
    if banded:
        chol_ab = sop.chol_ab
        kd = sop.kd
        inv_diag = dummy
    else:
        inv_diag = np.ascontiguousarray(sop.inv_diag, dtype=np.float64)
        chol_ab = np.empty((1, 1), order="F")
    cdef double[::1] augv = dummy
    if augmented:
        augv = np.ascontiguousarray(aug, dtype=np.float64)
        if nv != n + 1 or augv.shape[0] != n:
            raise ValueError("augmented basis needs V columns of length n + 1")
    elif nv != n:
        raise ValueError(f"basis column length {nv} does not match operator size {n}")

    cdef double[::1] w = np.empty(nv)
    cdef double[::1] h = np.empty(j_end + 1)
    cdef double[::1] h2 = np.empty(j_end + 1)
    cdef int j, i, m, info = 0, inc = 1
    cdef int jstart = j_start, jend = j_end
    cdef double nrm, scale, invn
    cdef double one = 1.0, zero = 0.0, neg = -1.0
    cdef char transT = b'T', transN = b'N'

    with nogil:
        for j in range(jstart, jend):
            info = _generator_into(k_data, k_indices, k_indptr, chol_ab, kd,
                                   banded, inv_diag, sign, Vv[j], w, n,
                                   augmented, augv)
            if info != 0:
                break
            m = j + 1
            dgemv(&transT, &nv, &m, &one, &Vv[0, 0], &nv, &w[0], &inc,
                  &zero, &h[0], &inc)
            dgemv(&transN, &nv, &m, &neg, &Vv[0, 0], &nv, &h[0], &inc,
                  &one, &w[0], &inc)
            dgemv(&transT, &nv, &m, &one, &Vv[0, 0], &nv, &w[0], &inc,
                  &zero, &h2[0], &inc)
            dgemv(&transN, &nv, &m, &neg, &Vv[0, 0], &nv, &h2[0], &inc,
                  &one, &w[0], &inc)
            for i in range(m):
                h[i] += h2[i]
            nrm = dnrm2(&nv, &w[0], &inc)
            for i in range(m):
                Hv[i, j] = h[i]
            Hv[j + 1, j] = nrm
            scale = sqrt(ddot(&m, &h[0], &inc, &h[0], &inc) + nrm * nrm)
            if nrm <= 1e-13 * scale or scale == 0.0:
                with gil:
                    return j + 1, True
            invn = 1.0 / nrm
            for i in range(nv):
                Vv[j + 1, i] = w[i] * invn
    if info != 0:
        raise RuntimeError(f"banded triangular solve failed (info={info})")
    return j_end, False
