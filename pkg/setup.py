"""Build script: compiles the fast integrator core when Cython is available.

The package works without the extension (a pure-Python stepper is selected at
import time), but long-horizon runs and the acceptance suite are only fast
with the compiled core.  Build in place with:

    python setup.py build_ext --inplace
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "resonance_lab._stepper_cy",
                ["src/resonance_lab/_stepper_cy.pyx"],
                extra_compile_args=["-O3"],
                language="c",
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
