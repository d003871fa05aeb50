"""Build hook for the optional compiled statistics kernel.

The package is pure Python plus one Cython extension
(``nids_xray.features._speedups``).  If Cython or a C compiler is
unavailable the build degrades to the pure-Python kernel, which is
selected automatically at import time.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "nids_xray.features._speedups",
                ["src/nids_xray/features/_speedups.pyx"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
