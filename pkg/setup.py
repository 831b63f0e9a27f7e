from setuptools import Extension, setup

# The compiled kernels are an optimization, not a requirement: the package
# falls back to the pure-Python twins in syncprobe/_kernels_py.py when the
# extension is missing.  -ffp-contract=off keeps the float math bit-identical
# to the fallback (no fused multiply-add).
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "syncprobe._kernels",
                ["src/syncprobe/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
