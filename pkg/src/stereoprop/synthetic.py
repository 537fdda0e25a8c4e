"""Slanted-plane stereo scenes with analytic disparity, normal and occlusion truth.

A scene is a stack of textured planes d(x, y) = a*x + b*y + c over axis-aligned
regions; later planes occlude earlier ones.  In the right view the same plane
induces d_r(x_r, y) = (a*x_r + b*y + c) / (1 - a) over the warped span, which
is what makes occlusion and photometric consistency checkable in closed form.
Textures are band-limited Fourier mixtures so bilinear warping is near exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeDisparity, ShapeMismatch
from .grid import DisparityMap, Grid, Mask, NormalMap, sample_plane

TEXTURE_COMPONENTS = 12
TEXTURE_BASE = 0.5
TEXTURE_AMPLITUDE = 0.35
TEXTURE_MIN_FREQ = 0.02
TEXTURE_MAX_FREQ = 0.12


@dataclass(frozen=True)
class PlaneSpec:
    """Disparity plane d(x, y) = a*x + b*y + c over [y0, y1) x [x0, x1)."""

    a: float
    b: float
    c: float
    region: tuple
    texture_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "region", tuple(int(v) for v in self.region))
        if len(self.region) != 4:
            raise ValueError("region must be (y0, x0, y1, x1)")

    def disparity_at(self, xs, ys):
        return self.a * xs + self.b * ys + self.c

    def right_disparity_at(self, xs, ys):
        return (self.a * xs + self.b * ys + self.c) / (1.0 - self.a)

    def right_span(self, ys):
        """Continuous right-view column span [lo, hi] of the warped region at rows ys."""
        y0, x0, y1, x1 = self.region
        lo = (1.0 - self.a) * x0 - self.b * ys - self.c
        hi = (1.0 - self.a) * (x1 - 1) - self.b * ys - self.c
        return lo, hi

    @property
    def normal(self) -> np.ndarray:
        raw = np.array([-self.a, -self.b, 1.0])
        return raw / np.sqrt(np.sum(raw ** 2))


@dataclass(frozen=True)
class SceneBundle:
    """Stereo pair with analytic ground truth.

    ``disparity_right`` is the right-view disparity field used for the
    occlusion computation, exposed so left-right consistency checks can be
    run against the generator.
    """

    left: Grid
    right: Grid
    disparity_gt: DisparityMap
    normal_gt: NormalMap
    occlusion: Mask
    disparity_right: DisparityMap


def _texture_params(seed: int):
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, TEXTURE_COMPONENTS)
    mags = rng.uniform(TEXTURE_MIN_FREQ, TEXTURE_MAX_FREQ, TEXTURE_COMPONENTS)
    amps = rng.uniform(0.5, 1.0, TEXTURE_COMPONENTS)
    amps *= TEXTURE_AMPLITUDE / np.sum(amps)
    phases = rng.uniform(0.0, 2.0 * np.pi, TEXTURE_COMPONENTS)
    return mags * np.cos(angles), mags * np.sin(angles), amps, phases


def _eval_texture(params, xs, ys):
    wx, wy, amps, phases = params
    out = np.full(np.broadcast(xs, ys).shape, TEXTURE_BASE, dtype=np.float64)
    for k in range(TEXTURE_COMPONENTS):
        out += amps[k] * np.sin(wx[k] * xs + wy[k] * ys + phases[k])
    return out


def _validate_specs(specs, h, w):
    if not specs:
        raise ValueError("at least one plane spec is required")
    for s in specs:
        y0, x0, y1, x1 = s.region
        if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
            raise ValueError(f"region {s.region} outside {h}x{w} image or empty")
        if s.a >= 1.0:
            raise ValueError("slope a must be < 1 so the left-to-right warp stays monotone")
        corners_x = np.array([x0, x1 - 1, x0, x1 - 1], dtype=np.float64)
        corners_y = np.array([y0, y0, y1 - 1, y1 - 1], dtype=np.float64)
        if np.min(s.disparity_at(corners_x, corners_y)) < 0.0:
            raise NegativeDisparity(f"plane {s} dips below zero disparity in its region")


def gen_planar_scene(specs, h: int, w: int, noise_sigma: float = 0.0,
                     seed: int = 0, occlusion_tol: float = 1.0) -> SceneBundle:
    """Render a deterministic scene from ordered plane specs (later = in front).

    The left view must be fully covered.  Right-view pixels no plane warps
    onto (disocclusion strips at the borders) extrapolate the nearest covered
    plane of their row.  Occlusion is the analytic left-right consistency
    test at ``occlusion_tol`` pixels.
    """
    specs = list(specs)
    _validate_specs(specs, h, w)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")

    label_left = np.full((h, w), -1, dtype=np.intp)
    d_left = np.zeros((h, w), dtype=np.float64)
    normal_gt = np.zeros((h, w, 3), dtype=np.float64)
    for i, s in enumerate(specs):
        y0, x0, y1, x1 = s.region
        label_left[y0:y1, x0:x1] = i
        d_left[y0:y1, x0:x1] = s.disparity_at(xx[y0:y1, x0:x1], yy[y0:y1, x0:x1])
        normal_gt[y0:y1, x0:x1] = s.normal
    if np.any(label_left < 0):
        raise ValueError("plane specs do not cover the left image")

    # Right-view labeling: integer columns inside each plane's warped span.
    label_right = np.full((h, w), -1, dtype=np.intp)
    cols = np.arange(w, dtype=np.float64)[None, :]
    rows_f = np.arange(h, dtype=np.float64)
    for i, s in enumerate(specs):
        y0, x0, y1, x1 = s.region
        lo, hi = s.right_span(rows_f[y0:y1])
        in_span = (cols >= lo[:, None]) & (cols <= hi[:, None])
        label_right[y0:y1][in_span] = i
    covered = label_right >= 0
    if not np.all(np.any(covered, axis=1)):
        raise ValueError("some right-view row is not covered by any plane")
    fwd = np.where(covered, np.arange(w)[None, :], -1)
    np.maximum.accumulate(fwd, axis=1, out=fwd)
    bwd = np.where(covered, np.arange(w)[None, :], w)
    bwd = np.minimum.accumulate(bwd[:, ::-1], axis=1)[:, ::-1]
    nearest = np.where(fwd >= 0, fwd, bwd)
    label_right = label_right[np.arange(h)[:, None], nearest]

    d_right = np.zeros((h, w), dtype=np.float64)
    right_img = np.zeros((h, w), dtype=np.float64)
    left_img = np.zeros((h, w), dtype=np.float64)
    for i, s in enumerate(specs):
        params = _texture_params(s.texture_seed)
        sel = label_left == i
        left_img[sel] = _eval_texture(params, xx[sel], yy[sel])
        sel_r = label_right == i
        dr = s.right_disparity_at(xx[sel_r], yy[sel_r])
        d_right[sel_r] = dr
        right_img[sel_r] = _eval_texture(params, xx[sel_r] + dr, yy[sel_r])
    d_right = np.maximum(d_right, 0.0)  # extrapolated strips stay in-domain

    # Analytic left-right consistency: the plane visible at the continuous
    # warp target u = x - d(x, y) decides whether the pixel survives.  Every
    # pixel's own plane covers its u, so d_at_u is always defined; a pixel is
    # occluded exactly when a nearer plane wins there.
    u = xx - d_left
    d_at_u = np.full((h, w), np.inf, dtype=np.float64)
    slack = 1e-9  # u and the span bounds are computed in different orders
    for i, s in enumerate(specs):
        y0, x0, y1, x1 = s.region
        lo, hi = s.right_span(rows_f)
        cov = (u >= lo[:, None] - slack) & (u <= hi[:, None] + slack)
        cov[:y0] = False
        cov[y1:] = False
        d_at_u = np.where(cov, s.right_disparity_at(u, yy), d_at_u)
    occluded = np.abs(d_left - d_at_u) > occlusion_tol

    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        left_img = left_img + noise_sigma * rng.standard_normal((h, w))
        right_img = right_img + noise_sigma * rng.standard_normal((h, w))

    return SceneBundle(
        left=Grid(left_img),
        right=Grid(right_img),
        disparity_gt=DisparityMap.from_array(d_left),
        normal_gt=NormalMap(Grid(normal_gt)),
        occlusion=Mask.from_bools(occluded),
        disparity_right=DisparityMap.from_array(d_right),
    )


def occlusion_from_disparity(d_left: DisparityMap, d_right: DisparityMap,
                             tol: float = 1.0) -> Mask:
    """Left-right consistency occlusion: |d_l(x) - d_r(x - d_l(x))| > tol.

    The right disparity is bilinearly sampled (clamped at the borders); pixels
    warping outside the right image compare against the border column.
    """
    if d_left.values.shape != d_right.values.shape:
        raise ShapeMismatch("disparity dimensions differ")
    h, w = d_left.values.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sampled = sample_plane(d_right.values, yy, xx - d_left.values)
    return Mask.from_bools(np.abs(d_left.values - sampled) > tol)
