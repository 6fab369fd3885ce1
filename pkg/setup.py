"""Build the optional compiled kernels.

    python setup.py build_ext --inplace

If Cython or a C compiler is missing the package still installs and the
pure-Python kernels are used.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ATMAS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "atmas._ckernels",
                    ["src/atmas/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
