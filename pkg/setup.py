"""Build script for the optional compiled kernels.

The package is pure Python plus one Cython extension holding the hot loops
(exact integer-Gaussian sampling and the in-place Walsh-Hadamard butterfly).
If Cython or a C compiler is unavailable the build succeeds without the
extension and the package falls back to the pure-Python kernels at import
time, so installation never hard-fails on the toolchain.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ddgauss._kernels",
                ["src/ddgauss/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
