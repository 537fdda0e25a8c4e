"""Surface normals from disparity and dense/sparse ground-truth fusion.

Normals live in disparity space with orientation n ~ (-dd/dx, -dd/dy, 1),
normalized to unit length, so fronto-parallel surfaces map to (0, 0, 1).
The Sobel kernels carry a 1/8 factor which makes the gradients exact on
linear disparity ramps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSum, ShapeMismatch, TooSmall
from .grid import DisparityMap, Grid, Mask, NormalMap
from .losses import smooth_l1_array


@dataclass(frozen=True)
class NormalGtBundle:
    """Fused normal ground truth with its sparse-support and high-error masks."""

    n_gt: NormalMap
    m_sparse: Mask
    e_index: Mask


def sobel_gradients(d: DisparityMap) -> tuple:
    """(dd/dx, dd/dy) via 3x3 Sobel with replicated borders, 1/8 normalization."""
    v = d.values
    h, w = v.shape
    if h < 3 or w < 3:
        raise TooSmall("sobel gradients need at least a 3x3 grid")
    p = np.pad(v, 1, mode="edge")
    gx = (
        -p[:-2, :-2] + p[:-2, 2:]
        - 2.0 * p[1:-1, :-2] + 2.0 * p[1:-1, 2:]
        - p[2:, :-2] + p[2:, 2:]
    ) / 8.0
    gy = (
        -p[:-2, :-2] - 2.0 * p[:-2, 1:-1] - p[:-2, 2:]
        + p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
    ) / 8.0
    return Grid(gx), Grid(gy)


def _normals_from_gradients(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    raw = np.stack([-gx, -gy, np.ones_like(gx)], axis=2)
    norms = np.sqrt(np.sum(raw ** 2, axis=2, keepdims=True))
    return raw / norms


def normal_from_disparity(d: DisparityMap) -> NormalMap:
    """Unit normals (-gx, -gy, 1)/|.| from Sobel disparity gradients."""
    gx, gy = sobel_gradients(d)
    return NormalMap(Grid(_normals_from_gradients(gx.plane(0), gy.plane(0))))


def sparse_normal_from_disparity(d: DisparityMap, valid: Mask) -> tuple:
    """Sobel normals restricted to pixels whose full 3x3 neighborhood is valid.

    A pixel qualifies only if itself and all 8 neighbors are in-image and
    valid; elsewhere the normal is the (0, 0, 1) placeholder and the output
    mask is 0.
    """
    v = d.values
    h, w = v.shape
    if v.shape != valid.values.shape:
        raise ShapeMismatch("disparity and validity dimensions differ")
    if h < 3 or w < 3:
        raise TooSmall("sparse normals need at least a 3x3 grid")
    ok = np.zeros((h, w), dtype=bool)
    vb = valid.bools
    interior = np.ones((h - 2, w - 2), dtype=bool)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            interior &= vb[dy : dy + h - 2, dx : dx + w - 2]
    ok[1:-1, 1:-1] = interior
    gx, gy = sobel_gradients(d)
    normals = _normals_from_gradients(gx.plane(0), gy.plane(0))
    placeholder = np.zeros_like(normals)
    placeholder[:, :, 2] = 1.0
    out = np.where(ok[:, :, None], normals, placeholder)
    return NormalMap(Grid(out)), Mask.from_bools(ok)


def fuse_normal_gt(n_pseudo: NormalMap, n_sparse: NormalMap, m_sparse: Mask) -> NormalMap:
    """Per-pixel selection of sparse normals where supported, pseudo elsewhere.

    With the binary mask the mix is an exact selection, so the inputs pass
    through bit-for-bit; pixels are only renormalized if their mixed vector
    strays from unit length, which keeps the output invariant intact without
    perturbing the selected normals.
    """
    if n_pseudo.grid.data.shape != n_sparse.grid.data.shape:
        raise ShapeMismatch("pseudo/sparse normal shapes differ")
    m = m_sparse.values[:, :, None]
    mixed = n_pseudo.vectors * (1.0 - m) + n_sparse.vectors * m
    norms = np.sqrt(np.sum(mixed ** 2, axis=2, keepdims=True))
    if np.any(norms <= 1e-12):
        raise DegenerateSum("fused normal vanished; inputs must not be antipodal")
    scale = np.where(np.abs(norms - 1.0) > 1e-9, norms, 1.0)
    return NormalMap(Grid(mixed / scale))


def epe_index(d_pseudo: DisparityMap, d_sparse: DisparityMap, valid: Mask,
              threshold: float = 1.0) -> Mask:
    """Mask of valid pixels where the pseudo label misses ground truth by > threshold px."""
    if d_pseudo.values.shape != d_sparse.values.shape:
        raise ShapeMismatch("disparity shapes differ")
    bad = np.abs(d_pseudo.values - d_sparse.values) > threshold
    return Mask.from_bools(bad & valid.bools)


def normal_channels(n) -> np.ndarray:
    """3-channel array of a NormalMap or raw Grid prediction.

    Losses accept raw grids because network outputs are compared before any
    normalization step.
    """
    grid = n.grid if isinstance(n, NormalMap) else n
    if grid.channels != 3:
        raise ShapeMismatch("expected three channels")
    return grid.data


def weighted_normal_loss(n_gt: NormalMap, n_hat, m_sparse: Mask,
                         e_index: Mask) -> float:
    """SmoothL1 normal supervision with 1.5 / 1.0 / 0.5 region weights.

    Weight 1.5 on sparse-supported pixels, 1.0 on unsupported pixels whose
    pseudo disparity was unreliable, 0.5 on the remaining unsupported pixels;
    mean-reduced over all pixels and channels.  The prediction may be a raw
    (not yet unit-length) 3-channel grid.
    """
    hat = normal_channels(n_hat)
    if n_gt.grid.data.shape != hat.shape:
        raise ShapeMismatch("normal shapes differ")
    per_elem = smooth_l1_array(n_gt.vectors - hat)
    m = m_sparse.values
    e = e_index.values
    weight = 1.5 * m + 1.0 * (1.0 - m) * e + 0.5 * (1.0 - m) * (1.0 - e)
    return float(np.mean(per_elem * weight[:, :, None]))


def build_normal_gt(d_pseudo: DisparityMap, d_sparse: DisparityMap, valid: Mask,
                    threshold: float = 1.0) -> NormalGtBundle:
    """Full ground-truth pipeline: dense pseudo normals fused with sparse ones.

    Dense normals come from the pseudo disparity, sparse normals from pixels
    with a fully valid 3x3 neighborhood in the sensor disparity; the bundled
    e_index marks valid pixels where the pseudo labels miss the sensor by
    more than ``threshold`` pixels.
    """
    n_pseudo = normal_from_disparity(d_pseudo)
    n_sparse, m_sparse = sparse_normal_from_disparity(d_sparse, valid)
    fused = fuse_normal_gt(n_pseudo, n_sparse, m_sparse)
    e_idx = epe_index(d_pseudo, d_sparse, valid, threshold=threshold)
    return NormalGtBundle(n_gt=fused, m_sparse=m_sparse, e_index=e_idx)


def residual_normal_update(n_coarse: NormalMap, delta: Grid) -> NormalMap:
    """Renormalize n + delta per pixel, the residual refinement step."""
    if delta.channels != 3:
        raise ShapeMismatch("delta must have three channels")
    if n_coarse.grid.data.shape != delta.data.shape:
        raise ShapeMismatch("normal and delta shapes differ")
    summed = n_coarse.vectors + delta.data
    norms = np.sqrt(np.sum(summed ** 2, axis=2, keepdims=True))
    if np.any(norms <= 1e-12):
        raise DegenerateSum("normal + delta vanished at some pixel")
    return NormalMap(Grid(summed / norms))
