"""Build script for the optional compiled kernels.

``pip install -e . --no-build-isolation`` compiles ``harnn._kernels``.  When no
compiler (or Cython) is available the package still installs and falls back to
the numpy kernels in ``harnn._kernels_py``.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("HARNN_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "harnn._kernels",
                    ["src/harnn/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
