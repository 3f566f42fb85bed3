import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DIMDECOMP_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "dimdecomp._kernels_cy",
                    ["src/dimdecomp/_kernels_cy.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython at build time: install the pure NumPy implementation only.
        ext_modules = []

setup(ext_modules=ext_modules)
