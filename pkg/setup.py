"""Build script for the optional compiled kernels.

The package is fully functional without the extension: `resikit._backend`
falls back to the numpy implementations in `resikit._kernels_py` when the
compiled module is unavailable.
"""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build-time only
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "resikit._kernels",
                ["src/resikit/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=extensions)
