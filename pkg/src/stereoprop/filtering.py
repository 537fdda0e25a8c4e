"""Feature-level operators: error-based attention and local affinity filtering.

Attention reweighting multiplies features by the logistic of an error map;
affinity filtering replaces each feature vector by a weighted sum over its
k x k window, one scalar weight per window cell shared across channels.
Both come with exact adjoints so they can serve as trainable layers.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import BadChannelCount, ShapeMismatch
from .grid import Grid

NORMALIZATION_EPS = _kernels.NORMALIZATION_EPS


@dataclass(frozen=True)
class LocalAffinity:
    """Normalized k x k window weights per pixel, H x W x k*k, k odd.

    Window cells are ordered row-major: channel (a + r) * k + (b + r) holds
    the weight of offset (a, b), r = (k - 1) // 2.
    """

    data: np.ndarray
    k: int

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 3:
            raise ValueError(f"local affinity must be (H, W, k*k), got {arr.shape}")
        if self.k < 1 or self.k % 2 == 0 or arr.shape[2] != self.k * self.k:
            raise BadChannelCount(f"window size {self.k} does not match {arr.shape[2]} channels")
        if np.any(np.sum(np.abs(arr), axis=2) > 1.0 + 1e-9):
            raise ValueError("absolute weight sums must not exceed 1")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


def _window_size(channels: int) -> int:
    k = isqrt(channels)
    if k * k != channels or k % 2 == 0:
        raise BadChannelCount(f"{channels} channels is not an odd square window")
    return k


def attention_reweight(f: Grid, f_e: Grid) -> Grid:
    """Elementwise F * sigmoid(F_e); a 1-channel error map broadcasts."""
    if (f_e.height, f_e.width) != (f.height, f.width):
        raise ShapeMismatch("feature and error dimensions differ")
    if f_e.channels not in (1, f.channels):
        raise ShapeMismatch("error map must have 1 channel or match the features")
    return Grid(f.data * expit(f_e.data))


def attention_backward(grad_out: np.ndarray, f: Grid, f_e: Grid) -> tuple:
    """Adjoint of attention_reweight: (grad_f, grad_f_e).

    grad_f = g * sigmoid(f_e); grad_f_e = g * F * sigmoid'(f_e), summed over
    feature channels when the error map broadcasts.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != f.data.shape:
        raise ShapeMismatch("grad_out dimensions differ from the features")
    s = expit(f_e.data)
    grad_f = g * s
    grad_fe = g * f.data * (s * (1.0 - s))
    if f_e.channels == 1 and f.channels != 1:
        grad_fe = np.sum(grad_fe, axis=2, keepdims=True)
    return grad_f, grad_fe


def normalize_local_affinity(a_raw: Grid, mode: str = "abs_sum") -> LocalAffinity:
    """Normalize raw window weights per pixel.

    ``abs_sum`` divides by the absolute sum (floored at NORMALIZATION_EPS),
    the same scheme the propagation weights use; ``softmax`` is the
    alternative, yielding strictly positive convex weights.
    """
    k = _window_size(a_raw.channels)
    arr = a_raw.data
    if mode == "abs_sum":
        s = np.sum(np.abs(arr), axis=2, keepdims=True)
        out = arr / np.maximum(s, NORMALIZATION_EPS)
    elif mode == "softmax":
        e = np.exp(arr - np.max(arr, axis=2, keepdims=True))
        out = e / np.sum(e, axis=2, keepdims=True)
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return LocalAffinity(out, k)


def local_affinity_filter(f_hat: Grid, a: LocalAffinity) -> Grid:
    """Window-weighted feature aggregation with clamped borders."""
    if a.data.shape[:2] != (f_hat.height, f_hat.width):
        raise ShapeMismatch("feature and affinity dimensions differ")
    return Grid(_kernels.filter_forward(f_hat.data, a.data, a.k))


def filter_backward(grad_out: np.ndarray, f_hat: Grid, a: LocalAffinity) -> tuple:
    """Adjoint of local_affinity_filter: (grad_f_hat, grad_a).

    grad_f_hat scatters each output gradient back through its window;
    grad_a(a, b) is the channel sum of grad_out times the shifted features.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != f_hat.data.shape:
        raise ShapeMismatch("grad_out dimensions differ from the features")
    if a.data.shape[:2] != (f_hat.height, f_hat.width):
        raise ShapeMismatch("feature and affinity dimensions differ")
    return _kernels.filter_backward(g, f_hat.data, a.data, a.k)
