import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -fno-math-errno keeps sqrt/exp fast without the NaN-breaking parts of -ffast-math;
# the solver relies on NaN and negative-area checks surviving optimization.
extensions = [
    Extension(
        "hemogp._kernels",
        ["src/hemogp/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fno-math-errno"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
