import os

from setuptools import setup, Extension
from Cython.Build import cythonize
import numpy as np


_np_random_lib = os.path.join(os.path.dirname(np.random.__file__), "lib")

ext_module = Extension(
    "fkpp_qsd._kernels._core",
    ["src/fkpp_qsd/_kernels/_core.pyx"],
    include_dirs=[np.get_include()],
    library_dirs=[_np_random_lib],
    libraries=["npyrandom"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize(ext_module, language_level=3),
)
