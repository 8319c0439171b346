"""Builds the compiled kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), but the build is attempted by default. Set WAVESEG_SKIP_EXT=1
to install pure-Python only.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("WAVESEG_SKIP_EXT"):
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "waveseg.backend._native",
                ["src/waveseg/backend/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
