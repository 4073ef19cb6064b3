"""Backend selection for the hot dynamics kernels.

Set ``EMGPINN_NUMBA=0`` to force the pure-numpy path. When numba is not
importable the numpy path is used regardless.
"""
import os

from . import _kernels_numpy

try:
    from . import _kernels_numba
except ImportError:  # pragma: no cover - numba is optional
    _kernels_numba = None

BACKENDS = {"numpy": _kernels_numpy}
if _kernels_numba is not None:
    BACKENDS["numba"] = _kernels_numba


def _default_backend():
    flag = os.environ.get("EMGPINN_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or "numba" not in BACKENDS:
        return "numpy"
    return "numba"


BACKEND = _default_backend()
kernels = BACKENDS[BACKEND]


def get_kernels(name=None):
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}") from None
