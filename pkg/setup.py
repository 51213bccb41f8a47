"""Build shim for the optional compiled kernel extension.

The package is pure Python plus one small Cython extension holding the
scalar-loop kernels (rank-1 Cholesky update/downdate, soft threshold).
The extension is marked optional: if no compiler or Cython is available
the install still succeeds and the numpy fallback is used at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "ell1._accel._fastkernels",
        sources=["src/ell1/_accel/_fastkernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level="3")
except ImportError:
    pass

setup(ext_modules=ext_modules)
