"""Build hook for the optional compiled kernels.

Metadata lives in pyproject.toml. If Cython or a compiler is missing, the
package still installs and runs on the pure-Python kernels.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SHIPEMS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "shipems._kernels._core",
                    ["src/shipems/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
