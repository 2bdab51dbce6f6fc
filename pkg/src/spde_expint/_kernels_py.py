"""Pure numpy/scipy kernels: reference implementation of the hot loops.

The compiled module ``spde_expint._kernels`` exposes the same two functions;
``spde_expint.backend`` picks whichever is available.  Results agree between
backends to rounding differences (different BLAS call patterns), not bitwise.
"""

import numpy as np

BACKEND_NAME = "python"


def apply_structured(sop, x, aug=None):
    """Apply the structured generator, optionally in augmented form.

    Plain form (aug None): returns sign * M^{-1}(K x).
    Augmented form: x has length n+1 and the result is
    [sign * M^{-1}(K x[:n]) + x[n] * aug, 0], the phi1 embedding.
    """
    n = sop.n
    if aug is None:
        return sop.sign * sop.solve_mass(sop.K_csr @ x)
    y = np.empty(n + 1)
    y[:n] = sop.sign * sop.solve_mass(sop.K_csr @ x[:n]) + x[n] * aug
    y[n] = 0.0
    return y


def arnoldi_extend(sop, aug, V, H, j_start, j_end):
    """Grow an Arnoldi basis of the structured operator in place.

    On entry rows 0..j_start of V hold an orthonormal basis with H filled
    for columns < j_start.  Steps j = j_start .. j_end-1 each apply the
    operator to V[j], orthogonalize (classical Gram-Schmidt with a second
    pass), and write V[j+1] and H[:j+2, j].

    Returns ``(j_stop, happy)``; ``happy`` signals breakdown at column
    j_stop-1 (invariant subspace reached, V[j_stop] not formed).
    """
    for j in range(j_start, j_end):
        w = apply_structured(sop, V[j], aug)
        h = V[:j + 1] @ w
        w -= V[:j + 1].T @ h
        h2 = V[:j + 1] @ w
        w -= V[:j + 1].T @ h2
        h += h2
        nrm = np.linalg.norm(w)
        H[:j + 1, j] = h
        H[j + 1, j] = nrm
        scale = np.sqrt(np.dot(h, h) + nrm * nrm)
        if nrm <= 1e-13 * scale or scale == 0.0:
            return j + 1, True
        V[j + 1] = w / nrm
    return j_end, False
