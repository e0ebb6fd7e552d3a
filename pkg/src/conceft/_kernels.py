"""Select the compiled kernels, falling back to numpy.

Set ``CONCEFT_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"
if os.environ.get("CONCEFT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._core import squeeze_nearest  # noqa: F401
        BACKEND = "cython"
    except ImportError:
        pass
if BACKEND == "python":
    from ._core_py import squeeze_nearest  # noqa: F401
