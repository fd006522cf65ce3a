"""Build the optional compiled barrier kernels.

The package is fully functional without them; a failed or skipped build
leaves the pure-Python kernels in charge.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MSSMPC_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "mssmpc.socp._kernels_ext",
                    ["src/mssmpc/socp/_kernels_ext.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
