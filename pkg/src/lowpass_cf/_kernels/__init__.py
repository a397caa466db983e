"""Hot kernels with a compiled (Cython/OpenMP) core and a numpy/scipy fallback.

The compiled module is used when it imports; setting ``LOWPASS_CF_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _fallback

try:
    from . import _native
except ImportError:  # extension not built
    _native = None

if _native is not None and os.environ.get("LOWPASS_CF_PURE_PYTHON", "") not in ("1", "true"):
    _impl = _native
    BACKEND = "native"
else:
    _impl = _fallback
    BACKEND = "python"

gram_rows = _impl.gram_rows
hadamard_power_inplace = _impl.hadamard_power_inplace
csr_dense_matmul = _impl.csr_dense_matmul
topk_masked = _impl.topk_masked


def available_backends():
    return ["native", "python"] if _native is not None else ["python"]


def get_backend(name):
    """Return the kernel module for ``name`` ("native" or "python")."""
    if name == "python":
        return _fallback
    if name == "native":
        if _native is None:
            raise ImportError("compiled kernels are not built")
        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
