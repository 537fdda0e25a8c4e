"""Stereo front end: correlation volume, soft disparity regression, warping.

The correlation score at candidate shift d pairs the left feature at x - d
with the right feature at x, averaged over channels.  Columns where x - d
falls off the image carry a -inf sentinel rather than a zero score, since
zero is a legitimate correlation value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import AllInvalidColumn, ShapeMismatch
from .grid import DisparityMap, Grid, Mask, sample_plane


@dataclass(frozen=True)
class CostVolume:
    """D x H x W correlation scores; -inf marks out-of-range candidates."""

    scores: np.ndarray

    def __post_init__(self):
        arr = np.array(self.scores, dtype=np.float64, order="C")
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"cost volume must be (D, H, W), got {arr.shape}")
        if np.any(np.isnan(arr)) or np.any(arr == np.inf):
            raise ValueError("scores must be finite or the -inf sentinel")
        arr.flags.writeable = False
        object.__setattr__(self, "scores", arr)

    @property
    def max_disparity(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class WarpedError:
    """Photometric residual of the disparity-warped right image, with validity."""

    grid: Grid
    validity: Mask

    def __post_init__(self):
        if self.grid.channels != 1:
            raise ValueError("warped error must have one channel")
        if np.any(self.grid.data < 0.0):
            raise ValueError("warped error must be non-negative")

    @property
    def values(self) -> np.ndarray:
        return self.grid.plane(0)


def build_correlation_volume(f_l: Grid, f_r: Grid, max_disparity: int) -> CostVolume:
    """scores[d, y, x] = mean_c f_l[y, x-d, c] * f_r[y, x, c], -inf where x < d."""
    if f_l.data.shape != f_r.data.shape:
        raise ShapeMismatch(f"feature shapes differ: {f_l.data.shape} vs {f_r.data.shape}")
    if max_disparity < 1:
        raise ValueError("max_disparity must be >= 1")
    return CostVolume(_kernels.correlation_volume(f_l.data, f_r.data, max_disparity))


def soft_argmin_disparity(vol: CostVolume, temperature: float = 1.0) -> DisparityMap:
    """Softmax-weighted expected disparity; sentinel candidates get zero weight."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    scores = vol.scores
    valid = scores > -np.inf
    if not np.all(np.any(valid, axis=0)):
        raise AllInvalidColumn("some pixel has no valid disparity candidate")
    peak = np.max(scores, axis=0)
    weights = np.exp((scores - peak[None, :, :]) / temperature)
    weights[~valid] = 0.0
    total = np.sum(weights, axis=0)
    cand = np.arange(vol.max_disparity, dtype=np.float64)[:, None, None]
    disparity = np.sum(cand * weights, axis=0) / total
    return DisparityMap.from_array(disparity)


def warp_right_to_left(image_r: Grid, d: DisparityMap) -> tuple:
    """Sample the right image at x - d(x, y); mask pixels whose source is in-image."""
    h, w = d.values.shape
    if (image_r.height, image_r.width) != (h, w):
        raise ShapeMismatch("image and disparity dimensions differ")
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    src_x = xs - d.values
    out = np.empty((h, w, image_r.channels), dtype=np.float64)
    for c in range(image_r.channels):
        out[:, :, c] = sample_plane(image_r.plane(c), ys, src_x)
    mask = Mask.from_bools((src_x >= 0.0) & (src_x <= w - 1.0))
    return Grid(out), mask


def warped_error(image_l: Grid, image_r: Grid, d: DisparityMap) -> WarpedError:
    """Channel-mean L1 residual |left - warp(right, d)|.

    Pixels whose warp source leaves the image get the maximum error observed
    on valid pixels, so downstream confidence heuristics treat them as bad.
    """
    if image_l.data.shape != image_r.data.shape:
        raise ShapeMismatch("left/right shapes differ")
    warped, mask = warp_right_to_left(image_r, d)
    err = np.mean(np.abs(image_l.data - warped.data), axis=2)
    inside = mask.bools
    worst = float(np.max(err[inside])) if np.any(inside) else 0.0
    err = np.where(inside, err, worst)
    return WarpedError(Grid(err), mask)
