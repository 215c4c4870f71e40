"""Backend selection for the basis kernels.

The compiled extension is used when importable; setting the environment
variable ``VARBESOV_PURE_PYTHON=1`` forces the NumPy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("VARBESOV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        _impl = _compiled
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

local_basis = _impl.local_basis
tensor_eval = _impl.tensor_eval
tensor_rows = _impl.tensor_rows

__all__ = ["BACKEND", "local_basis", "tensor_eval", "tensor_rows"]
