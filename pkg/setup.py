"""Build the optional compiled kernel; the package falls back to pure Python without it."""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    # no fast-math and no FMA contraction: the compiled kernel must round
    # exactly like the pure-Python fallback
    extensions = [
        Extension(
            "hover_es._ckernel",
            ["src/hover_es/_ckernel.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
