"""Build shim for the optional compiled kernels.

The simulator stepper and the SAT core each have a Cython twin; when a
toolchain is available they are compiled here, otherwise the package
installs without them and the pure-Python implementations are selected at
import time. Set HIVE_NO_EXT=1 to skip the extensions deliberately.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("HIVE_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "hive._stepper_cy",
                    ["src/hive/_stepper_cy.pyx"],
                    extra_compile_args=["-O2"],
                    optional=True,
                ),
                Extension(
                    "hive.solver._satcore_cy",
                    ["src/hive/solver/_satcore_cy.pyx"],
                    language="c++",
                    extra_compile_args=["-O2"],
                    optional=True,
                ),
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
