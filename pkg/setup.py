"""Build script for the optional compiled recurrence kernels.

The package is fully functional without the extension: if Cython or a C
compiler is unavailable the build falls back to the numpy kernel backend
(geoprog.autodiff.kernels picks whichever is importable).
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext = Extension(
        "geoprog.autodiff.kernels._core",
        ["src/geoprog/autodiff/kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    ext_modules = cythonize([ext], language_level="3")
except ImportError:
    pass

setup(ext_modules=ext_modules)
