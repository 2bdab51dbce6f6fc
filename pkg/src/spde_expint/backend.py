"""Kernel backend selection.

The compiled Cython kernels are used when the extension built; setting
``SPDE_EXPINT_PURE_PY=1`` (before import) forces the numpy fallback.  Both
backends implement ``apply_structured`` and ``arnoldi_extend`` with the same
contracts; see ``_kernels_py`` for the reference semantics.
"""

import os

from . import _kernels_py

if os.environ.get("SPDE_EXPINT_PURE_PY"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # compiled
    except ImportError:
        kernels = _kernels_py

__all__ = ["kernels", "kernel_backend"]


def kernel_backend():
    """Name of the active kernel backend: "compiled" or "python"."""
    return kernels.BACKEND_NAME
