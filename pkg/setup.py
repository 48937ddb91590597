from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "lamafield._estep_cy",
                ["src/lamafield/_estep_cy.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: the package falls back to the pure-numpy kernels at import.
    ext_modules = []

setup(ext_modules=ext_modules)
