from setuptools import Extension, setup

# The compiled kernels are optional: if Cython or a C compiler is missing the
# install still succeeds and partlift falls back to the numpy implementation.
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "partlift._kernels",
                ["src/partlift/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
