"""Build script: compiles the optional accelerator extension when Cython and a
C toolchain are available, and falls back to the pure-numpy kernels otherwise.

The installed package is identical either way; evpool.backend picks the
implementation at import time (override with EVPOOL_BACKEND=python|cython).
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Ship pure Python instead of failing the install when compilation breaks."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            warnings.warn(f"accelerator extension skipped (build_ext failed: {exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"accelerator extension skipped ({ext.name}: {exc})")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        warnings.warn(f"accelerator extension skipped (missing build dep: {exc})")
        return []
    ext = Extension(
        "evpool._kernels",
        sources=["src/evpool/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
