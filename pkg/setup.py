"""Build script for the optional compiled kernels.

The package works without the extension: ``htl.kernels`` falls back to the
numpy implementations in ``htl._pykernels`` when ``htl._ckernels`` is absent.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("HTL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "htl._ckernels",
                    ["src/htl/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
