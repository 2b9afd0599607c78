"""Build script: compiles the optional Cython kernels.

The package works without the compiled extension (a pure-Python twin of every
kernel is selected at import time), so a failed native build downgrades to a
warning instead of aborting the install.
"""

import os
import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "logbandit._kernels._core",
                ["src/logbandit/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"logbandit: skipping Cython kernels ({exc!r}); "
                     "falling back to pure-Python backend\n")
    extensions = []

if os.environ.get("LOGBANDIT_SKIP_EXT"):
    extensions = []

setup(ext_modules=extensions)
