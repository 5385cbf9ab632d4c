"""Pick the compiled kernels when available.

Set ``INVSHUTTLE_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

if os.environ.get("INVSHUTTLE_PURE_PYTHON") == "1":
    from ._fallback import gaussian_rk4

    BACKEND = "python"
else:
    try:
        from ._kernels import gaussian_rk4
    except ImportError:
        from ._fallback import gaussian_rk4

        BACKEND = "python"
    else:
        BACKEND = "cython"

__all__ = ["BACKEND", "gaussian_rk4"]
