import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "maskpipe.kernels._native",
    ["src/maskpipe/kernels/_native.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
)
# The package stays importable without the extension: the numpy backend is
# selected at import time when the compiled module is missing.
ext.optional = True

setup(ext_modules=cythonize([ext], language_level="3"))
