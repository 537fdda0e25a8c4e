"""Confidence-weighted local and non-local disparity propagation.

A propagation step replaces each disparity with an affine combination of its
8 neighbors (canonical or offset) and itself.  Affinity-confidence products
are normalized by their absolute sum at the pixel, and the self weight is
one minus the normalized sum, so the weights always partition unity: constant
maps are exact fixed points and the update commutes with adding a constant.

Neighbor order everywhere: (-1,-1), (-1,0), (-1,1), (0,-1), (0,1), (1,-1),
(1,0), (1,1).  Offsets are (dy, dx) displacements added to the canonical
neighbor position; sampling positions are clamped to the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from . import _kernels
from .errors import ShapeMismatch
from .grid import ConfidenceMap, DisparityMap, Grid, NormalMap
from .matching import WarpedError

NEIGHBOR_OFFSETS = _kernels.NEIGHBOR_OFFSETS
NORMALIZATION_EPS = _kernels.NORMALIZATION_EPS


@dataclass(frozen=True)
class AffinityField:
    """Raw per-pixel affinities toward the 8 canonical neighbors, H x W x 8."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 3 or arr.shape[2] != 8:
            raise ValueError(f"affinity field must be (H, W, 8), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("affinities must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class OffsetField:
    """Fractional (dy, dx) displacements per neighbor, H x W x 8 x 2."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 4 or arr.shape[2] != 8 or arr.shape[3] != 2:
            raise ValueError(f"offset field must be (H, W, 8, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("offsets must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, h: int, w: int) -> "OffsetField":
        return cls(np.zeros((h, w, 8, 2), dtype=np.float64))


@dataclass(frozen=True)
class NormalizedAffinity:
    """Affinity-confidence products scaled so sum |a~| <= 1 per pixel."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.ndim != 3 or arr.shape[2] != 8:
            raise ValueError(f"normalized affinity must be (H, W, 8), got {arr.shape}")
        if np.any(np.sum(np.abs(arr), axis=2) > 1.0 + 1e-9):
            raise ValueError("absolute affinity sums must not exceed 1")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)


def _check_field_shapes(d: DisparityMap, aff: AffinityField, conf: ConfidenceMap,
                        offsets: OffsetField | None = None) -> None:
    h, w = d.values.shape
    if aff.data.shape[:2] != (h, w) or conf.values.shape != (h, w):
        raise ShapeMismatch("disparity/affinity/confidence dimensions differ")
    if offsets is not None and offsets.data.shape[:2] != (h, w):
        raise ShapeMismatch("offset field dimensions differ")


def _gather_canonical(plane: np.ndarray) -> np.ndarray:
    """Values of the 8 clamped canonical neighbors, shape (H, W, 8)."""
    h, w = plane.shape
    ys = np.arange(h)
    xs = np.arange(w)
    out = np.empty((h, w, 8), dtype=np.float64)
    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        qy = np.clip(ys + dy, 0, h - 1)
        qx = np.clip(xs + dx, 0, w - 1)
        out[:, :, i] = plane[qy[:, None], qx[None, :]]
    return out


def normalize_affinities(aff: AffinityField, conf: ConfidenceMap) -> NormalizedAffinity:
    """Scale affinity-confidence products by their absolute sum per pixel.

    Confidence is taken at each neighbor's canonical (clamped) position.  A
    vanishing sum is floored at NORMALIZATION_EPS, which degenerates the step
    to the identity rather than dividing by zero.
    """
    if aff.data.shape[:2] != conf.values.shape:
        raise ShapeMismatch("affinity/confidence dimensions differ")
    c_n = _gather_canonical(conf.values)
    u = aff.data * c_n
    s = np.zeros(conf.values.shape, dtype=np.float64)
    for i in range(8):
        s = s + np.abs(u[:, :, i])
    z = np.maximum(s, NORMALIZATION_EPS)
    return NormalizedAffinity(u / z[:, :, None])


def _propagate_with_weights(d: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """d_p + sum_i w_i (d_i - d_p) over canonical clamped neighbors."""
    d_n = _gather_canonical(d)
    acc = np.zeros_like(d)
    for i in range(8):
        acc = acc + weights[:, :, i] * (d_n[:, :, i] - d)
    return d + acc


def propagate_local(d: DisparityMap, aff: AffinityField, conf: ConfidenceMap,
                    unnormalized: bool = False) -> DisparityMap:
    """One propagation step over the fixed 3x3 window.

    By default affinities go through the confidence-incorporated
    normalization; ``unnormalized`` uses the raw affinity-confidence products
    as weights instead (the self weight is then 1 minus their plain sum),
    which can diverge under iteration and exists for ablation only.

    Negative affinities extrapolate and may undershoot zero; the result is
    clamped into the disparity domain.  The clamp is inactive whenever
    min(d) >= max(d) - min(d), since normalized weights keep the update
    within that distance of the input.
    """
    _check_field_shapes(d, aff, conf)
    if unnormalized:
        weights = aff.data * _gather_canonical(conf.values)
    else:
        weights = normalize_affinities(aff, conf).data
    out = _propagate_with_weights(d.values, weights)
    return DisparityMap.from_array(np.maximum(out, 0.0))


def propagate_nonlocal(d: DisparityMap, offsets: OffsetField, aff: AffinityField,
                       conf: ConfidenceMap) -> DisparityMap:
    """One propagation step with per-neighbor fractional offsets.

    Neighbor disparities and confidences are bilinearly sampled at the offset
    positions; normalization, the self weight and the zero clamp work as in
    the local step.  With all offsets zero this reduces exactly to
    propagate_local.
    """
    _check_field_shapes(d, aff, conf, offsets)
    out = _kernels.propagate_forward(d.values, offsets.data, aff.data, conf.values)
    return DisparityMap.from_array(np.maximum(out, 0.0))


def iterate_propagation(d: DisparityMap, offsets: OffsetField, aff: AffinityField,
                        conf: ConfidenceMap, steps: int) -> DisparityMap:
    """Apply propagate_nonlocal ``steps`` times with fixed guidance fields."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    out = d
    for _ in range(steps):
        out = propagate_nonlocal(out, offsets, aff, conf)
    return out


def propagate_nonlocal_backward(grad_out: np.ndarray, d: DisparityMap,
                                offsets: OffsetField, aff: AffinityField,
                                conf: ConfidenceMap) -> tuple:
    """Analytic vector-Jacobian products of propagate_nonlocal.

    Returns (grad_d, grad_aff, grad_conf, grad_offsets) as plain arrays of
    the input shapes.  The absolute-value normalization uses sign(0) = 0 and
    bilinear sampling differentiates piecewise, with zero position gradient
    where the sample was clamped to the border.  Gradients are those of the
    pre-clamp update and therefore exact wherever the zero clamp is inactive.
    """
    _check_field_shapes(d, aff, conf, offsets)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != d.values.shape:
        raise ShapeMismatch("grad_out dimensions differ from the disparity map")
    return _kernels.propagate_backward(g, d.values, offsets.data, aff.data, conf.values)


def heuristic_offsets_from_normal(n: NormalMap, e: WarpedError, radius: int,
                                  min_agreement: float = 0.98) -> tuple:
    """Deterministic guidance fields from normals and warped error.

    Each canonical direction is stretched step by step up to ``radius`` as
    long as every visited pixel stays in-image, its normal agrees with the
    center (dot product >= min_agreement) and its warped error does not
    exceed the local window median.  The offset points at the furthest
    accepted pixel; a direction whose first step already fails retreats to
    the center.  The affinity is the normal agreement at the final sample,
    clamped to [0, 1].
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    vecs = n.vectors
    h, w = vecs.shape[:2]
    if e.values.shape != (h, w):
        raise ShapeMismatch("normal and error dimensions differ")
    err = e.values
    med = median_filter(err, size=2 * radius + 1, mode="nearest")
    ys = np.arange(h)
    xs = np.arange(w)
    offsets = np.zeros((h, w, 8, 2), dtype=np.float64)
    affinity = np.empty((h, w, 8), dtype=np.float64)
    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        alive = np.ones((h, w), dtype=bool)
        reach = np.zeros((h, w), dtype=np.intp)
        for m in range(1, radius + 1):
            qy = ys[:, None] + m * dy
            qx = xs[None, :] + m * dx
            inb = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
            cy = np.clip(qy, 0, h - 1)
            cx = np.clip(qx, 0, w - 1)
            dot = np.zeros((h, w), dtype=np.float64)
            for c in range(3):
                dot += vecs[:, :, c] * vecs[cy, cx, c]
            ok = inb & (dot >= min_agreement) & (err[cy, cx] <= med)
            alive &= ok
            reach[alive] = m
        offsets[:, :, i, 0] = (reach - 1) * dy
        offsets[:, :, i, 1] = (reach - 1) * dx
        ey = np.clip(ys[:, None] + reach * dy, 0, h - 1)
        ex = np.clip(xs[None, :] + reach * dx, 0, w - 1)
        dot = np.zeros((h, w), dtype=np.float64)
        for c in range(3):
            dot += vecs[:, :, c] * vecs[ey, ex, c]
        affinity[:, :, i] = np.clip(dot, 0.0, 1.0)
    return OffsetField(offsets), AffinityField(affinity)
