"""Build script.

The compiled kernel module is optional: if Cython or a C compiler is
unavailable the install proceeds and the package falls back to the pure
numpy/scipy kernels at import time.
"""

import os
import sys

from setuptools import setup
from setuptools.errors import CCompilerError, ExecError, PlatformError


def extensions():
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "spde_expint._kernels",
        sources=["src/spde_expint/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


def run_setup(with_ext):
    setup(ext_modules=extensions() if with_ext else [])


if os.environ.get("SPDE_EXPINT_NO_EXT"):
    run_setup(False)
else:
    try:
        run_setup(True)
    except (CCompilerError, ExecError, PlatformError, ImportError, SystemExit) as exc:
        sys.stderr.write(f"warning: compiled kernels unavailable ({exc}); "
                         "installing with pure-Python kernels only\n")
        run_setup(False)
