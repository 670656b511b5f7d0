"""Build script: compiles the optional Cython search kernel.

The package is fully functional without the extension; the solver falls
back to the pure-Python twin in streamplan.solver._search.bb_py. Set
STREAMPLAN_SKIP_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("STREAMPLAN_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/streamplan/solver/_search/bb_cy.pyx"],
            language_level=3,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
