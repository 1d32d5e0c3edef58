"""Build script: compiles the optional metric kernel extension when Cython
and a C compiler are available. The package works without it (a pure-Python
twin of the kernels is selected at import time)."""

from setuptools import setup

extensions = []
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        ["src/organrrg/metrics/_kernels_cy.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=extensions)
