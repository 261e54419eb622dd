import os

from setuptools import Extension, setup

PYX = os.path.join("src", "rdtorus", "_speed.pyx")

try:
    from Cython.Build import cythonize
    import numpy

    have_cython = True
except ImportError:
    # No Cython at build time: install pure-Python only, the engine
    # falls back to rdtorus._pyref at import.
    have_cython = False

if have_cython and os.path.exists(PYX):
    extensions = cythonize(
        [
            Extension(
                "rdtorus._speed",
                [PYX],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
