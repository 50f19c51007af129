"""Build script for the compiled random-walk kernel.

The kernel is a plain C loop over trajectories; it needs no numpy C API,
only typed memoryviews, so the extension carries no include dirs.
"""

from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        [
            Extension(
                "thermoops._kernels.walk_cy",
                ["src/thermoops/_kernels/walk_cy.pyx"],
            )
        ],
        language_level=3,
    ),
)
