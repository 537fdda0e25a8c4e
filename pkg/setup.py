import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled kernels bit-identical to the numpy
# fallback (no fused multiply-add contraction); -fno-math-errno only drops
# errno bookkeeping so floor/fabs inline, values are unchanged.
ext = Extension(
    "stereoprop._kernels._native",
    ["src/stereoprop/_kernels/_native.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off", "-fno-math-errno"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
