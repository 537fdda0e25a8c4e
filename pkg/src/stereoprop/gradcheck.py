"""Central finite-difference verification of the analytic backward passes.

Trial inputs are sampled away from the non-smooth points of the forward maps
(integer sampling positions, zero affinity-confidence products, the border
clamp) so the comparison is meaningful; the operators themselves accept any
valid input.
"""

from __future__ import annotations

import numpy as np

from .filtering import (
    LocalAffinity,
    attention_backward,
    attention_reweight,
    filter_backward,
    local_affinity_filter,
)
from .grid import ConfidenceMap, DisparityMap, Grid
from .propagation import (
    AffinityField,
    OffsetField,
    propagate_nonlocal,
    propagate_nonlocal_backward,
)

DEFAULT_STEP = 1e-5


def central_difference(forward, arr: np.ndarray, grad_out: np.ndarray,
                       step: float = DEFAULT_STEP) -> np.ndarray:
    """d<grad_out, forward(arr)>/d arr element by element."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = grad.reshape(-1)
    base = arr.astype(np.float64).copy()
    bflat = base.reshape(-1)
    for j in range(bflat.size):
        orig = bflat[j]
        bflat[j] = orig + step
        hi = np.sum(forward(base) * grad_out)
        bflat[j] = orig - step
        lo = np.sum(forward(base) * grad_out)
        bflat[j] = orig
        flat[j] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric))), 1e-10)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _smooth_offsets(rng, h, w):
    """Offsets whose sampling positions sit inside the image, off integer lines."""
    off = rng.uniform(-1.5, 1.5, (h, w, 8, 2))
    from ._kernels import NEIGHBOR_OFFSETS

    ys = np.arange(h, dtype=np.float64)[:, None, None]
    xs = np.arange(w, dtype=np.float64)[None, :, None]
    nb = np.array(NEIGHBOR_OFFSETS, dtype=np.float64)
    pos_y = ys + nb[None, None, :, 0] + off[:, :, :, 0]
    pos_x = xs + nb[None, None, :, 1] + off[:, :, :, 1]
    for pos, axis, n in ((pos_y, 0, h), (pos_x, 1, w)):
        clipped = np.clip(pos, 0.4, n - 1.6)
        frac = clipped - np.floor(clipped)
        clipped = clipped + np.where(frac < 0.2, 0.3, 0.0) + np.where(frac > 0.8, -0.3, 0.0)
        off[:, :, :, axis] += clipped - pos
    return off


def check_propagation(trials: int = 20, seed: int = 0, step: float = DEFAULT_STEP) -> dict:
    """Max relative FD error of the propagation backward, per input."""
    rng = np.random.default_rng(seed)
    worst = {"disparity": 0.0, "affinity": 0.0, "confidence": 0.0, "offsets": 0.0}
    for _ in range(trials):
        h = int(rng.integers(4, 8))
        w = int(rng.integers(4, 8))
        d = rng.uniform(8.0, 14.0, (h, w))
        aff = rng.uniform(0.2, 1.0, (h, w, 8)) * rng.choice([-1.0, 1.0], (h, w, 8))
        conf = rng.uniform(0.3, 0.95, (h, w))
        off = _smooth_offsets(rng, h, w)
        grad_out = rng.standard_normal((h, w))

        def fwd(dv=d, av=aff, cv=conf, ov=off):
            return propagate_nonlocal(
                DisparityMap.from_array(dv), OffsetField(ov),
                AffinityField(av), ConfidenceMap.from_array(cv)).values

        gd, ga, gc, go = propagate_nonlocal_backward(
            grad_out, DisparityMap.from_array(d), OffsetField(off),
            AffinityField(aff), ConfidenceMap.from_array(conf))
        pairs = (
            ("disparity", gd, d, lambda v: fwd(dv=v)),
            ("affinity", ga, aff, lambda v: fwd(av=v)),
            ("confidence", gc, conf, lambda v: fwd(cv=v)),
            ("offsets", go, off, lambda v: fwd(ov=v)),
        )
        for name, analytic, arr, f in pairs:
            numeric = central_difference(f, arr, grad_out, step)
            worst[name] = max(worst[name], relative_error(analytic, numeric))
    return worst


def check_filtering(trials: int = 20, seed: int = 0, step: float = DEFAULT_STEP,
                    k: int = 3) -> dict:
    """Max relative FD error of the affinity-filter adjoint, per input."""
    rng = np.random.default_rng(seed)
    worst = {"features": 0.0, "affinity": 0.0}
    for _ in range(trials):
        h = int(rng.integers(4, 8))
        w = int(rng.integers(4, 8))
        c = int(rng.integers(1, 4))
        f = rng.standard_normal((h, w, c))
        raw = rng.standard_normal((h, w, k * k))
        # Scale below the unit absolute-sum bound so FD probes stay valid.
        a = 0.9 * raw / np.sum(np.abs(raw), axis=2, keepdims=True)
        grad_out = rng.standard_normal((h, w, c))

        def fwd_f(v):
            return local_affinity_filter(Grid(v), LocalAffinity(a, k)).data

        def fwd_a(v):
            return local_affinity_filter(Grid(f), LocalAffinity(v, k)).data

        gf, ga = filter_backward(grad_out, Grid(f), LocalAffinity(a, k))
        worst["features"] = max(worst["features"], relative_error(
            gf, central_difference(fwd_f, f, grad_out, step)))
        worst["affinity"] = max(worst["affinity"], relative_error(
            ga, central_difference(fwd_a, a, grad_out, step)))
    return worst


def check_attention(trials: int = 20, seed: int = 0, step: float = DEFAULT_STEP) -> dict:
    """Max relative FD error of the attention-reweight adjoint, per input."""
    rng = np.random.default_rng(seed)
    worst = {"features": 0.0, "error_map": 0.0}
    for t in range(trials):
        h = int(rng.integers(2, 7))
        w = int(rng.integers(2, 7))
        c = int(rng.integers(1, 4))
        ec = 1 if t % 2 == 0 else c
        f = rng.standard_normal((h, w, c))
        fe = rng.standard_normal((h, w, ec))
        grad_out = rng.standard_normal((h, w, c))

        def fwd_f(v):
            return attention_reweight(Grid(v), Grid(fe)).data

        def fwd_e(v):
            return attention_reweight(Grid(f), Grid(v)).data

        gf, ge = attention_backward(grad_out, Grid(f), Grid(fe))
        worst["features"] = max(worst["features"], relative_error(
            gf, central_difference(fwd_f, f, grad_out, step)))
        worst["error_map"] = max(worst["error_map"], relative_error(
            ge, central_difference(fwd_e, fe, grad_out, step)))
    return worst


def run_gradcheck(module: str = "all", trials: int = 20, seed: int = 0,
                  step: float = DEFAULT_STEP) -> dict:
    """Run the selected FD suites and report per-gradient max relative errors."""
    out = {}
    if module in ("all", "propagation"):
        out["propagation"] = check_propagation(trials, seed, step)
    if module in ("all", "filtering"):
        out["filtering"] = check_filtering(trials, seed, step)
        out["attention"] = check_attention(trials, seed, step)
    if not out:
        raise ValueError(f"unknown gradcheck module {module!r}")
    return out
