import sys

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # no toolchain: the pure-Python kernels are used
    ext_modules = []
else:
    openmp = [] if sys.platform == "darwin" else ["-fopenmp"]
    ext_modules = cythonize(
        [
            Extension(
                "lowpass_cf._kernels._native",
                ["src/lowpass_cf/_kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no -ffast-math: NaN detection and reproducible sums depend on IEEE semantics
                extra_compile_args=["-O3", *openmp],
                extra_link_args=openmp,
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
