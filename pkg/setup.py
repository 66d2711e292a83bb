import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled core is optional at runtime; exposim falls back to pure Python
# when the extension is missing.
extensions = [
    Extension(
        "exposim._kernels",
        ["src/exposim/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
