"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so compilation failures are downgraded to a warning instead
of aborting the install.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:
            warnings.warn(f"compiled kernels skipped ({exc}); numpy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernels skipped ({exc}); numpy fallback will be used")


def extensions():
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "pulseprop._kernels._speedups",
        ["src/pulseprop/_kernels/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
