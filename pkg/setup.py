import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "unfold_homog._kernels._stencil",
                ["src/unfold_homog/_kernels/_stencil.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # the package falls back to the numpy kernels at import time
    ext_modules = []

setup(ext_modules=ext_modules)
