"""Build script for the optional compiled kernels.

The package works without the extension; kernel calls fall back to the
NumPy implementations in ``zoprox._kernels_py``. The extension is marked
optional so a missing or broken C toolchain degrades to the fallback
instead of failing the install.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "zoprox._kernels",
                sources=["src/zoprox/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
