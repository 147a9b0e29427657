"""Build script: compiles the optional stencil kernel extension.

The package is fully functional without the extension (a pure-numpy
backend is selected at import time); the compiled core only speeds up
the wave-solver inner loops.  Any failure here therefore degrades to a
pure-python install instead of aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "lifespan_lab._kernels",
                ["src/lifespan_lab/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # noqa: BLE001 - any build-chain gap means "no extension"
    print(f"lifespan-lab: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
