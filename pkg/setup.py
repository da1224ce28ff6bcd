"""Build script: compiles the optional Cython kernel extension.

Set DURACD_NO_BINARY=1 to skip the extension entirely; the package then
runs on the pure-numpy kernel backend.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("DURACD_NO_BINARY"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "duracd._kernels._ext",
                    ["src/duracd/_kernels/_ext.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
