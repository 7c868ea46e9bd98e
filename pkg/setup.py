"""Build script for the optional compiled kernels.

The package is pure Python except for rpulstm._kernels_cy, which
accelerates the analog read pipeline and the stochastic pulse update. The
extension is marked optional: if it cannot be built, installation proceeds
and the package falls back to the numpy twins at import time.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "rpulstm._kernels_cy",
        sources=["src/rpulstm/_kernels_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
