"""Hot-kernel backend selection.

The compiled extension is preferred when its build artifact is importable;
otherwise the numpy fallback is used.  Both produce bit-identical results,
so the choice only affects speed.  ``set_backend`` exists for benchmarks and
tests; normal code never needs it.
"""

from __future__ import annotations

import numpy as np

from . import _numpy

try:
    from . import _native
except ImportError:  # extension not built, e.g. a pure source checkout
    _native = None

_active = _native if _native is not None else _numpy

NEIGHBOR_OFFSETS = _numpy.NEIGHBOR_OFFSETS
NORMALIZATION_EPS = _numpy.NORMALIZATION_EPS


def backend_name() -> str:
    return "native" if _active is _native else "numpy"


def available_backends() -> tuple:
    return ("native", "numpy") if _native is not None else ("numpy",)


def set_backend(name: str) -> None:
    global _active
    if name == "native":
        if _native is None:
            raise RuntimeError("native kernel extension is not built")
        _active = _native
    elif name == "numpy":
        _active = _numpy
    else:
        raise ValueError(f"unknown backend {name!r}")


def _c(arr) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def correlation_volume(f_l, f_r, max_disparity: int) -> np.ndarray:
    return np.asarray(_active.correlation_volume(_c(f_l), _c(f_r), int(max_disparity)))


def propagate_forward(d, offsets, aff, conf) -> np.ndarray:
    return np.asarray(_active.propagate_forward(_c(d), _c(offsets), _c(aff), _c(conf)))


def propagate_backward(grad_out, d, offsets, aff, conf):
    out = _active.propagate_backward(_c(grad_out), _c(d), _c(offsets), _c(aff), _c(conf))
    return tuple(np.asarray(a) for a in out)


def filter_forward(f, a, k: int) -> np.ndarray:
    return np.asarray(_active.filter_forward(_c(f), _c(a), int(k)))


def filter_backward(grad_out, f, a, k: int):
    out = _active.filter_backward(_c(grad_out), _c(f), _c(a), int(k))
    return tuple(np.asarray(a) for a in out)
