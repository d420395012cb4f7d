"""Build the optional compiled Metropolis-Hastings kernel.

The package works without the extension: specverse.stats.kernels falls back
to the pure-numpy implementation at import time. Building is attempted here
and skipped (with a notice) if no compiler or Cython is available.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "specverse.stats.kernels._mh_cy",
                ["src/specverse/stats/kernels/_mh_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError as exc:  # pragma: no cover - build-environment dependent
    print(f"specverse: building without compiled kernel ({exc})")
    extensions = []

setup(ext_modules=extensions)
