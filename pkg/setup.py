"""Build script for the optional compiled QP kernel.

The package is fully functional without the extension: lanemerge.qpsolve
falls back to a pure-Python implementation of the same solver when the
compiled module is unavailable.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "lanemerge.qpsolve._activeset",
                ["src/lanemerge/qpsolve/_activeset.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
