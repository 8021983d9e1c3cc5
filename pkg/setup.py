import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "bavamio._cd",
        ["src/bavamio/_cd.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O2"],
    )
]

setup(
    ext_modules=cythonize(extensions, language_level=3),
)
