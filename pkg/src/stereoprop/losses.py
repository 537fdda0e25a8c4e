"""Supervision terms and disparity evaluation metrics.

Loss reduction is the mean over supervised elements throughout.  Default
coefficients: per-scale weights (1.0, 0.8, 0.8, 0.6), disparity 5, normal 50,
confidence 1, and confidence thresholds 0.5 / 1.5 px.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyValidSet, ShapeMismatch
from .grid import ConfidenceMap, DisparityMap, Mask, NormalMap


def smooth_l1(x: float) -> float:
    """0.5 x^2 below unit error, |x| - 0.5 beyond; C1 at the switch."""
    x = float(x)
    if abs(x) < 1.0:
        return 0.5 * x * x
    return abs(x) - 0.5


def smooth_l1_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the multi-scale total loss."""

    lambda_scale: tuple = (1.0, 0.8, 0.8, 0.6)
    lambda_d: float = 5.0
    lambda_n: float = 50.0
    lambda_c: float = 1.0
    c1: float = 0.5
    c2: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "lambda_scale", tuple(float(v) for v in self.lambda_scale))
        if len(self.lambda_scale) != 4:
            raise ValueError("expected one weight per scale (4 scales)")
        vals = (*self.lambda_scale, self.lambda_d, self.lambda_n, self.lambda_c)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be non-negative")
        if not self.c1 < self.c2:
            raise ValueError("confidence thresholds require c1 < c2")


def disparity_loss(d_gt: DisparityMap, d_hat: DisparityMap, valid: Mask) -> float:
    """Mean SmoothL1 disparity error over valid pixels."""
    if d_gt.values.shape != d_hat.values.shape:
        raise ShapeMismatch("disparity shapes differ")
    sel = valid.bools
    if not np.any(sel):
        raise EmptyValidSet("no valid pixels to supervise")
    return float(np.mean(smooth_l1_array(d_gt.values[sel] - d_hat.values[sel])))


def normal_loss(n_gt: NormalMap, n_hat) -> float:
    """Mean SmoothL1 over all pixels and normal channels.

    The prediction may be a NormalMap or a raw (not yet unit-length)
    3-channel Grid, since network outputs are supervised pre-normalization.
    """
    hat = n_hat.grid.data if isinstance(n_hat, NormalMap) else n_hat.data
    if hat.ndim != 3 or hat.shape[2] != 3:
        raise ShapeMismatch("prediction must have three channels")
    if n_gt.grid.data.shape != hat.shape:
        raise ShapeMismatch("normal shapes differ")
    return float(np.mean(smooth_l1_array(n_gt.vectors - hat)))


def confidence_loss(c: ConfidenceMap, d_gt: DisparityMap, d_hat: DisparityMap,
                    valid: Mask, c1: float = 0.5, c2: float = 1.5) -> float:
    """Push confidence up below c1 px of error and down above c2 px.

    Per pixel: max(1-c, 0) where |d - d_hat| < c1, max(c, 0) where it exceeds
    c2, zero in the dead zone between; mean over valid pixels.
    """
    if not c1 < c2:
        raise ValueError("confidence thresholds require c1 < c2")
    if d_gt.values.shape != d_hat.values.shape or c.values.shape != d_gt.values.shape:
        raise ShapeMismatch("confidence/disparity shapes differ")
    sel = valid.bools
    if not np.any(sel):
        raise EmptyValidSet("no valid pixels to supervise")
    err = np.abs(d_gt.values[sel] - d_hat.values[sel])
    cv = c.values[sel]
    term = (np.maximum(1.0 - cv, 0.0) * (err < c1)
            + np.maximum(cv, 0.0) * (err > c2))
    return float(np.mean(term))


def total_loss(per_scale_terms, weights: LossWeights = LossWeights()) -> float:
    """sum_s lambda_s * (lambda_d L_d + lambda_n L_n + lambda_c L_c) over 4 scales."""
    terms = list(per_scale_terms)
    if len(terms) != 4:
        raise ValueError(f"expected loss terms for exactly 4 scales, got {len(terms)}")
    total = 0.0
    for lam_s, (l_d, l_n, l_c) in zip(weights.lambda_scale, terms):
        total += lam_s * (weights.lambda_d * l_d + weights.lambda_n * l_n
                          + weights.lambda_c * l_c)
    return float(total)


# --- evaluation ----------------------------------------------------------

@dataclass(frozen=True)
class RegionMetrics:
    """Disparity error statistics over one pixel region."""

    count: int
    epe: float
    p1: float
    p3: float
    d1: float
    bad2: float
    bad4: float
    rmse: float
    avg_err: float

    def to_dict(self) -> dict:
        return {
            "count": self.count, "epe": self.epe, "p1": self.p1, "p3": self.p3,
            "d1": self.d1, "bad2": self.bad2, "bad4": self.bad4,
            "rmse": self.rmse, "avg_err": self.avg_err,
        }


@dataclass(frozen=True)
class MetricReport:
    """Metrics over all valid pixels plus occluded / non-occluded splits.

    A split is None when it contains no valid pixels.
    """

    all: RegionMetrics
    occluded: RegionMetrics | None = None
    non_occluded: RegionMetrics | None = None

    def to_dict(self) -> dict:
        out = {"all": self.all.to_dict()}
        if self.occluded is not None:
            out["occluded"] = self.occluded.to_dict()
        if self.non_occluded is not None:
            out["non_occluded"] = self.non_occluded.to_dict()
        return out


def _region_metrics(gt: np.ndarray, err: np.ndarray) -> RegionMetrics:
    epe = float(np.mean(err))
    return RegionMetrics(
        count=int(err.size),
        epe=epe,
        p1=float(np.mean(err > 1.0)),
        p3=float(np.mean(err > 3.0)),
        d1=float(np.mean((err > 3.0) & (err > 0.05 * gt))),
        bad2=float(np.mean(err > 2.0)),
        bad4=float(np.mean(err > 4.0)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        avg_err=epe,
    )


def evaluate(d_gt: DisparityMap, d_hat: DisparityMap, valid: Mask,
             occlusion: Mask | None = None) -> MetricReport:
    """EPE, Pn, D1 (KITTI compound rule), BadN and RMSE with region splits."""
    if d_gt.values.shape != d_hat.values.shape:
        raise ShapeMismatch("disparity shapes differ")
    sel = valid.bools
    if not np.any(sel):
        raise EmptyValidSet("no valid pixels to evaluate")
    err = np.abs(d_gt.values - d_hat.values)
    overall = _region_metrics(d_gt.values[sel], err[sel])
    occ_metrics = None
    noc_metrics = None
    if occlusion is not None:
        occ_sel = sel & occlusion.bools
        noc_sel = sel & ~occlusion.bools
        if np.any(occ_sel):
            occ_metrics = _region_metrics(d_gt.values[occ_sel], err[occ_sel])
        if np.any(noc_sel):
            noc_metrics = _region_metrics(d_gt.values[noc_sel], err[noc_sel])
    return MetricReport(all=overall, occluded=occ_metrics, non_occluded=noc_metrics)
