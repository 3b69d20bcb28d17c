import os

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -march=native is deliberate: the extension is always built from source on the
# machine that runs it, and the direct conv kernels need FMA to be competitive
# with BLAS. Set SOUNDGLYPH_PORTABLE=1 to build without it.
# The reassociation flags (a strict subset of -ffast-math that leaves inf/nan
# semantics intact) let the compiler vectorize the weight-gradient kernel's
# scalar reductions; kernel sums may differ from the numpy reference in the
# last couple of ulps, which the backend parity test budgets for.
compile_args = [
    "-O3",
    "-funroll-loops",
    "-fno-math-errno",
    "-fno-trapping-math",
    "-fno-signed-zeros",
    "-fassociative-math",
]
if not os.environ.get("SOUNDGLYPH_PORTABLE"):
    compile_args.append("-march=native")

extensions = [
    Extension(
        "soundglyph.kernels._convext",
        ["src/soundglyph/kernels/_convext.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=compile_args,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
