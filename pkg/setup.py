import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python fallback is selected at import time
    cythonize = None

ext_modules = []
_PYX = "src/fmt_engine/_core.pyx"
if cythonize is not None and os.path.exists(_PYX) and not os.environ.get("FMT_ENGINE_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "fmt_engine._core",
                [_PYX],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
