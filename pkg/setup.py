import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the compiled kernels must be bit-identical to the numpy
# fallback, so fused multiply-adds are disabled.
extensions = [
    Extension(
        "tonescope._core._cykernels",
        ["src/tonescope/_core/_cykernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
