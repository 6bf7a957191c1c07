"""Build hook: compiles the optional accelerated kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any failure here degrades gracefully to a pure
Python install.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("PREFOPT_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "prefopt._core",
                    ["src/prefopt/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3", "-ffast-math", "-fno-finite-math-only"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
