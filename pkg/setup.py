from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "gltau._kernels",
        ["src/gltau/_kernels.pyx"],
        extra_compile_args=["-O3", "-fcx-limited-range", "-fno-math-errno"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
