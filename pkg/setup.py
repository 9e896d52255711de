import numpy as np
from setuptools import Extension, setup

# The compiled ray-casting kernel is optional: if Cython is missing or the
# build fails, the package falls back to the numpy backend at import time.
ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "arealoc._kernels._ray_cy",
                sources=["src/arealoc/_kernels/_ray_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
