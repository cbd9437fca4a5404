"""Build script for the optional compiled kernels.

The package works without them; ``lzsc._backend`` falls back to numpy when
the extension is missing.
"""
import os

from setuptools import Extension, setup

ext_modules = []
# LZSC_PORTABLE=1 drops -march=native for binaries that must run on other CPUs.
cflags = ["-fopenmp", "-O3", "-g0", "-Wno-unreachable-code"]
if os.environ.get("LZSC_PORTABLE") != "1":
    cflags.append("-march=native")
if os.environ.get("LZSC_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    name="lzsc._kernels",
                    sources=["src/lzsc/_kernels.pyx"],
                    extra_compile_args=cflags,
                    extra_link_args=["-fopenmp"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
