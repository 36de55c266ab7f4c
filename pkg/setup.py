"""Build the optional compiled kernel extension.

The package works without it; ``crowdmob.kernels`` falls back to the numpy
implementation when the extension is missing. Set CROWDMOB_NO_EXT=1 to skip
the build entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("CROWDMOB_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        extensions = [
            Extension(
                "crowdmob.kernels._ckernels",
                ["src/crowdmob/kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3", "-std=c++17"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
