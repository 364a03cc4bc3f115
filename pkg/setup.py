"""Build script: compiles the optional C kernel when a toolchain is present,
otherwise installs the pure numpy backend only.

The extension builds from the Cython source when Cython is importable, from
the shipped generated C file otherwise; any compiler failure degrades to the
fallback instead of failing the install."""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

PYX = os.path.join("src", "smech", "kernel", "_ckernel.pyx")
CSRC = os.path.join("src", "smech", "kernel", "_ckernel.c")


class OptionalBuildExt(build_ext):
    """Degrade to the pure-Python package when the extension cannot build."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"smech: compiled kernel skipped ({exc}); "
                  "the numpy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"smech: compiled kernel skipped ({exc}); "
                  "the numpy fallback will be used")


def _extensions():
    if os.environ.get("SMECH_NO_EXT") == "1":
        return []
    if os.path.exists(PYX):
        try:
            from Cython.Build import cythonize

            return cythonize([PYX], language_level=3)
        except Exception as exc:  # pragma: no cover
            print(f"smech: cython unavailable ({exc}); trying the generated C")
    if os.path.exists(CSRC):
        return [Extension("smech.kernel._ckernel", [CSRC])]
    print("smech: no kernel sources found; the numpy fallback will be used")
    return []


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
