"""Dense grid containers plus the resampling primitives shared by every operator.

All maps are stored as immutable row-major ``float64`` arrays of shape
(H, W, C).  Sampling uses clamp-to-edge borders so that constant maps are
exact fixed points of every downstream propagation weight, and resizing
uses the pixel-center convention ``src = (dst + 0.5) * ratio - 0.5`` which
makes a downsample/upsample round trip exact on linear ramps away from the
border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class Grid:
    """Immutable H x W x C array of finite 64-bit reals."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"grid must be (H, W, C) with positive dims, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self, channel: int = 0) -> np.ndarray:
        """Read-only 2-D view of one channel."""
        return self.data[:, :, channel]


@dataclass(frozen=True)
class DisparityMap:
    """Single-channel grid of horizontal pixel shifts, all >= 0."""

    grid: Grid

    def __post_init__(self):
        if self.grid.channels != 1:
            raise ValueError("disparity map must have exactly one channel")
        if np.any(self.grid.data < 0.0):
            raise ValueError("disparity values must be non-negative")

    @property
    def values(self) -> np.ndarray:
        return self.grid.plane(0)

    @classmethod
    def from_array(cls, arr) -> "DisparityMap":
        return cls(Grid(np.asarray(arr, dtype=np.float64)))


@dataclass(frozen=True)
class Mask:
    """Single-channel grid holding exactly 0.0 or 1.0."""

    grid: Grid

    def __post_init__(self):
        if self.grid.channels != 1:
            raise ValueError("mask must have exactly one channel")
        v = self.grid.data
        if not np.all((v == 0.0) | (v == 1.0)):
            raise ValueError("mask values must be exactly 0 or 1")

    @property
    def values(self) -> np.ndarray:
        return self.grid.plane(0)

    @property
    def bools(self) -> np.ndarray:
        return self.grid.plane(0) == 1.0

    @classmethod
    def from_bools(cls, arr) -> "Mask":
        return cls(Grid(np.asarray(arr, dtype=bool).astype(np.float64)))


@dataclass(frozen=True)
class NormalMap:
    """Three-channel grid of unit surface normals (n_x, n_y, n_z).

    The producing operators use the orientation n ~ (-dd/dx, -dd/dy, 1), so
    fronto-parallel surfaces map to (0, 0, 1); unit length is enforced here,
    orientation is a convention of the producers.
    """

    grid: Grid

    def __post_init__(self):
        if self.grid.channels != 3:
            raise ValueError("normal map must have exactly three channels")
        norms = np.sqrt(np.sum(self.grid.data ** 2, axis=2))
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("normals must be unit length (|norm - 1| <= 1e-9)")

    @property
    def vectors(self) -> np.ndarray:
        return self.grid.data

    @classmethod
    def from_array(cls, arr, renormalize: bool = False) -> "NormalMap":
        arr = np.asarray(arr, dtype=np.float64)
        if renormalize:
            norms = np.sqrt(np.sum(arr ** 2, axis=2, keepdims=True))
            arr = arr / norms
        return cls(Grid(arr))


@dataclass(frozen=True)
class ConfidenceMap:
    """Single-channel grid of reliabilities in [0, 1]."""

    grid: Grid

    def __post_init__(self):
        if self.grid.channels != 1:
            raise ValueError("confidence map must have exactly one channel")
        v = self.grid.data
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("confidence values must lie in [0, 1]")

    @property
    def values(self) -> np.ndarray:
        return self.grid.plane(0)

    @classmethod
    def from_array(cls, arr) -> "ConfidenceMap":
        return cls(Grid(np.asarray(arr, dtype=np.float64)))


@dataclass(frozen=True)
class Pyramid:
    """Grids at scales s = 0 (full) through len(levels)-1 (1/2^s)."""

    levels: tuple

    def __post_init__(self):
        if not self.levels:
            raise ValueError("pyramid needs at least one level")
        object.__setattr__(self, "levels", tuple(self.levels))


# --- sampling ------------------------------------------------------------

def sample_plane(plane: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sample of a 2-D array at fractional coordinates.

    Coordinates are clamped to [0, H-1] x [0, W-1] before interpolation.
    Uses the incremental lerp form ``a + t*(b - a)`` so constant planes are
    reproduced bit-exactly at any coordinate.
    """
    h, w = plane.shape
    cy = np.clip(np.asarray(ys, dtype=np.float64), 0.0, float(h - 1))
    cx = np.clip(np.asarray(xs, dtype=np.float64), 0.0, float(w - 1))
    y0f = np.floor(cy)
    x0f = np.floor(cx)
    fy = cy - y0f
    fx = cx - x0f
    y0 = y0f.astype(np.intp)
    x0 = x0f.astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    v00 = plane[y0, x0]
    v01 = plane[y0, x1]
    v10 = plane[y1, x0]
    v11 = plane[y1, x1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def bilinear_sample(grid: Grid, y: float, x: float, channel: int = 0) -> float:
    """Bilinear interpolation of one channel at (y, x), clamped to the border."""
    return float(sample_plane(grid.plane(channel), np.float64(y), np.float64(x)))


# --- resizing ------------------------------------------------------------

def downsample(grid: Grid, is_disparity: bool = False) -> Grid:
    """2x2 average pooling to ceil(H/2) x ceil(W/2).

    Edge blocks of odd-sized inputs average over the cells that exist.
    Disparities are additionally halved since they scale with image width.
    """
    data = grid.data
    h, w, c = data.shape
    h2 = (h + 1) // 2
    w2 = (w + 1) // 2
    acc = np.zeros((h2, w2, c), dtype=np.float64)
    cnt = np.zeros((h2, w2, 1), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            sub = data[dy::2, dx::2]
            acc[: sub.shape[0], : sub.shape[1]] += sub
            cnt[: sub.shape[0], : sub.shape[1]] += 1.0
    out = acc / cnt
    if is_disparity:
        out = out / 2.0
    return Grid(out)


def upsample(grid: Grid, target_h: int, target_w: int, is_disparity: bool = False) -> Grid:
    """Bilinear resize to (target_h, target_w), target >= source.

    Disparities are multiplied by the width ratio target_w / source_w.
    """
    h, w, c = grid.data.shape
    if target_h < h or target_w < w:
        raise ShapeMismatch(f"target ({target_h}, {target_w}) smaller than source ({h}, {w})")
    ys = np.clip((np.arange(target_h, dtype=np.float64) + 0.5) * (h / target_h) - 0.5, 0.0, float(h - 1))
    xs = np.clip((np.arange(target_w, dtype=np.float64) + 0.5) * (w / target_w) - 0.5, 0.0, float(w - 1))
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((target_h, target_w, c), dtype=np.float64)
    for ch in range(c):
        out[:, :, ch] = sample_plane(grid.plane(ch), yy, xx)
    if is_disparity:
        out = out * (target_w / w)
    return Grid(out)


def build_pyramid(grid: Grid, num_levels: int = 4, is_disparity: bool = False) -> Pyramid:
    """Repeatedly downsample into num_levels scales, full resolution first."""
    levels = [grid]
    for _ in range(num_levels - 1):
        levels.append(downsample(levels[-1], is_disparity=is_disparity))
    return Pyramid(tuple(levels))
