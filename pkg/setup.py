"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-NumPy fallback is selected
at import time); set CONVEXMC_NO_EXT=1 to skip compiling it.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CONVEXMC_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "convexmc._kernels.cykernels",
                    ["src/convexmc/_kernels/cykernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
