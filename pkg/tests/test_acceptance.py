"""Acceptance suite: one test per release criterion, each printing PASS.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are fixed here and must not be loosened.
"""

import numpy as np
import pytest

import oracles
from stereoprop import io_formats
from stereoprop.filtering import (
    LocalAffinity,
    attention_backward,
    attention_reweight,
    filter_backward,
    local_affinity_filter,
)
from stereoprop.grid import ConfidenceMap, DisparityMap, Grid, Mask, NormalMap
from stereoprop.losses import (
    LossWeights,
    confidence_loss,
    evaluate,
    total_loss,
)
from stereoprop.matching import build_correlation_volume, warped_error
from stereoprop.normals import (
    fuse_normal_gt,
    normal_from_disparity,
    sparse_normal_from_disparity,
    weighted_normal_loss,
)
from stereoprop.propagation import (
    AffinityField,
    OffsetField,
    heuristic_offsets_from_normal,
    iterate_propagation,
    propagate_local,
    propagate_nonlocal,
    propagate_nonlocal_backward,
)
from stereoprop.synthetic import PlaneSpec, gen_planar_scene

ORACLE_TOL = 1e-10
GRAD_TOL = 1e-4
FD_STEP = 1e-5


def report(name):
    print(f"\nACCEPTANCE {name}: PASS")


# --- criterion 1: operator-oracle equivalence -------------------------------

def test_operator_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = {"propagate_local": 0.0, "propagate_nonlocal": 0.0,
             "local_affinity_filter": 0.0, "attention_reweight": 0.0,
             "build_correlation_volume": 0.0}
    for trial in range(100):
        h = int(rng.integers(2, 9))
        w = int(rng.integers(2, 9))
        c = int(rng.integers(1, 5))

        d = rng.uniform(10.0, 19.0, (h, w))
        aff = rng.standard_normal((h, w, 8))
        conf = rng.uniform(0.0, 1.0, (h, w))
        off = rng.uniform(-2.0, 2.0, (h, w, 8, 2))

        # alternate between the normalized default and the raw ablation path;
        # the raw path needs small weights to stay in the disparity domain
        unnormalized = bool(trial % 2)
        local_aff = aff * 0.05 if unnormalized else aff
        got = propagate_local(DisparityMap.from_array(d), AffinityField(local_aff),
                              ConfidenceMap.from_array(conf),
                              unnormalized=unnormalized).values
        ref = np.array(oracles.propagate_local_ref(
            d.tolist(), local_aff.tolist(), conf.tolist(), unnormalized=unnormalized))
        worst["propagate_local"] = max(worst["propagate_local"],
                                       float(np.max(np.abs(got - ref))))

        got = propagate_nonlocal(DisparityMap.from_array(d), OffsetField(off),
                                 AffinityField(aff),
                                 ConfidenceMap.from_array(conf)).values
        ref = np.array(oracles.propagate_nonlocal_ref(
            d.tolist(), off.tolist(), aff.tolist(), conf.tolist()))
        worst["propagate_nonlocal"] = max(worst["propagate_nonlocal"],
                                          float(np.max(np.abs(got - ref))))

        f = rng.standard_normal((h, w, c))
        raw = rng.standard_normal((h, w, 9))
        la = raw / np.sum(np.abs(raw), axis=2, keepdims=True)
        got = local_affinity_filter(Grid(f), LocalAffinity(la, 3)).data
        ref = np.array(oracles.filter_ref(f.tolist(), la.tolist(), 3))
        worst["local_affinity_filter"] = max(worst["local_affinity_filter"],
                                             float(np.max(np.abs(got - ref))))

        fe = rng.standard_normal((h, w, 1 if trial % 2 else c))
        got = attention_reweight(Grid(f), Grid(fe)).data
        ref = np.array(oracles.attention_ref(f.tolist(), fe.tolist()))
        worst["attention_reweight"] = max(worst["attention_reweight"],
                                          float(np.max(np.abs(got - ref))))

        f_l = rng.standard_normal((h, w, c))
        f_r = rng.standard_normal((h, w, c))
        dmax = int(rng.integers(1, 7))
        got = build_correlation_volume(Grid(f_l), Grid(f_r), dmax).scores
        ref = np.array(oracles.correlation_ref(f_l.tolist(), f_r.tolist(), dmax))
        finite = np.isfinite(ref)
        assert np.array_equal(np.isfinite(got), finite)
        diff = float(np.max(np.abs(got[finite] - ref[finite]))) if finite.any() else 0.0
        worst["build_correlation_volume"] = max(worst["build_correlation_volume"], diff)

    for name, value in worst.items():
        assert value < ORACLE_TOL, (name, value)
    report(f"operator-oracle equivalence (100 instances/op, max abs diff "
           f"{max(worst.values()):.2e} < {ORACLE_TOL})")


# --- criterion 2: gradient suite ---------------------------------------------

def fd_gradient(forward, arr, grad_out, step=FD_STEP):
    arr = arr.astype(np.float64).copy()
    grad = np.zeros_like(arr)
    flat_in = arr.reshape(-1)
    flat_out = grad.reshape(-1)
    for j in range(flat_in.size):
        keep = flat_in[j]
        flat_in[j] = keep + step
        hi = float(np.sum(forward(arr) * grad_out))
        flat_in[j] = keep - step
        lo = float(np.sum(forward(arr) * grad_out))
        flat_in[j] = keep
        flat_out[j] = (hi - lo) / (2.0 * step)
    return grad


def rel_err(analytic, numeric):
    scale = max(float(np.max(np.abs(numeric))), 1e-10)
    return float(np.max(np.abs(analytic - numeric))) / scale


def smooth_positions(rng, h, w):
    """Offsets keeping every sample position interior with fraction in [0.2, 0.8]."""
    from stereoprop.propagation import NEIGHBOR_OFFSETS

    off = rng.uniform(-1.5, 1.5, (h, w, 8, 2))
    nb = np.array(NEIGHBOR_OFFSETS, dtype=float)
    base_y = np.arange(h, dtype=float)[:, None, None] + nb[None, None, :, 0]
    base_x = np.arange(w, dtype=float)[None, :, None] + nb[None, None, :, 1]
    for axis, base, n in ((0, base_y, h), (1, base_x, w)):
        pos = base + off[:, :, :, axis]
        pos = np.clip(pos, 0.4, n - 1.6)
        frac = pos - np.floor(pos)
        pos = pos + np.where(frac < 0.2, 0.3, 0.0) - np.where(frac > 0.8, 0.3, 0.0)
        off[:, :, :, axis] = pos - base
    return off


def test_gradient_suite():
    rng = np.random.default_rng(77)
    worst = {}

    for trial in range(20):
        h = int(rng.integers(4, 7))
        w = int(rng.integers(4, 7))
        d = rng.uniform(8.0, 14.0, (h, w))
        aff = rng.uniform(0.2, 1.0, (h, w, 8)) * rng.choice([-1.0, 1.0], (h, w, 8))
        conf = rng.uniform(0.3, 0.95, (h, w))
        off = smooth_positions(rng, h, w)
        g = rng.standard_normal((h, w))

        def fwd(dv=d, av=aff, cv=conf, ov=off):
            return propagate_nonlocal(DisparityMap.from_array(dv), OffsetField(ov),
                                      AffinityField(av),
                                      ConfidenceMap.from_array(cv)).values

        gd, ga, gc, go = propagate_nonlocal_backward(
            g, DisparityMap.from_array(d), OffsetField(off), AffinityField(aff),
            ConfidenceMap.from_array(conf))
        for name, analytic, arr, f in (
                ("propagation/d", gd, d, lambda v: fwd(dv=v)),
                ("propagation/affinity", ga, aff, lambda v: fwd(av=v)),
                ("propagation/confidence", gc, conf, lambda v: fwd(cv=v)),
                ("propagation/offsets", go, off, lambda v: fwd(ov=v))):
            e = rel_err(analytic, fd_gradient(f, arr, g))
            worst[name] = max(worst.get(name, 0.0), e)

    for trial in range(20):
        h = int(rng.integers(3, 7))
        w = int(rng.integers(3, 7))
        c = int(rng.integers(1, 4))
        f = rng.standard_normal((h, w, c))
        raw = rng.standard_normal((h, w, 9))
        la = 0.9 * raw / np.sum(np.abs(raw), axis=2, keepdims=True)
        g = rng.standard_normal((h, w, c))
        gf, ga = filter_backward(g, Grid(f), LocalAffinity(la, 3))
        e = rel_err(gf, fd_gradient(
            lambda v: local_affinity_filter(Grid(v), LocalAffinity(la, 3)).data, f, g))
        worst["filter/features"] = max(worst.get("filter/features", 0.0), e)
        e = rel_err(ga, fd_gradient(
            lambda v: local_affinity_filter(Grid(f), LocalAffinity(v, 3)).data, la, g))
        worst["filter/affinity"] = max(worst.get("filter/affinity", 0.0), e)

        fe = rng.standard_normal((h, w, 1 if trial % 2 else c))
        gf, ge = attention_backward(g, Grid(f), Grid(fe))
        e = rel_err(gf, fd_gradient(
            lambda v: attention_reweight(Grid(v), Grid(fe)).data, f, g))
        worst["attention/features"] = max(worst.get("attention/features", 0.0), e)
        e = rel_err(ge, fd_gradient(
            lambda v: attention_reweight(Grid(f), Grid(v)).data, fe, g))
        worst["attention/error_map"] = max(worst.get("attention/error_map", 0.0), e)

    for name, value in worst.items():
        assert value < GRAD_TOL, (name, value)
    report(f"gradient suite (20 trials/path, max rel err "
           f"{max(worst.values()):.2e} < {GRAD_TOL})")


# --- criterion 3: propagation invariants -------------------------------------

def test_propagation_invariants():
    rng = np.random.default_rng(4096)
    for trial in range(1000):
        h = int(rng.integers(2, 7))
        w = int(rng.integers(2, 7))
        # band [10, 19] keeps every affine update inside the disparity domain
        d_vals = rng.uniform(10.0, 19.0, (h, w))
        d = DisparityMap.from_array(d_vals)
        aff = AffinityField(rng.standard_normal((h, w, 8)))
        conf = ConfidenceMap.from_array(rng.uniform(0.0, 1.0, (h, w)))
        off = OffsetField(rng.uniform(-2.0, 2.0, (h, w, 8, 2)))

        # weight partition: the self weight is one minus the neighbor sum, so
        # a constant field is an exact fixed point
        const = DisparityMap.from_array(np.full((h, w), float(rng.uniform(1, 30))))
        out = propagate_nonlocal(const, off, aff, conf)
        assert np.array_equal(out.values, const.values)

        base = propagate_nonlocal(d, off, aff, conf).values

        k = float(rng.uniform(0.0, 4.0))
        shifted = propagate_nonlocal(DisparityMap.from_array(d_vals + k),
                                     off, aff, conf).values
        assert np.max(np.abs(shifted - (base + k))) < 1e-10

        s = float(rng.uniform(0.1, 3.0))
        scaled = propagate_nonlocal(DisparityMap.from_array(s * d_vals),
                                    off, aff, conf).values
        assert np.max(np.abs(scaled - s * base)) < 1e-9

        nonneg = AffinityField(np.abs(aff.data))
        convex = propagate_nonlocal(d, off, nonneg, conf).values
        assert np.all(convex >= np.min(d_vals) - 1e-12)
        assert np.all(convex <= np.max(d_vals) + 1e-12)

        silent = propagate_nonlocal(d, off, aff,
                                    ConfidenceMap.from_array(np.zeros((h, w))))
        assert np.array_equal(silent.values, d_vals)
    report("propagation invariants (1000 instances x 6 properties)")


# --- criterion 4: normal pipeline --------------------------------------------

def test_normal_pipeline():
    # analytic plane normals
    scene = gen_planar_scene(
        [PlaneSpec(0.0, 0.0, 8.0, (0, 0, 64, 96), texture_seed=1),
         PlaneSpec(0.25, 0.1, 2.0, (12, 20, 52, 76), texture_seed=2)], 64, 96)
    n = normal_from_disparity(scene.disparity_gt)
    interior = np.zeros((64, 96), dtype=bool)
    interior[2:-2, 2:-2] = True
    interior[10:54, 18:78] = False
    interior[14:50, 22:74] = True
    assert np.max(np.abs(n.vectors - scene.normal_gt.vectors)[interior]) < 1e-6

    # fusion equals the sparse normals exactly on the sparse mask
    rng = np.random.default_rng(5)
    pseudo = NormalMap.from_array(rng.standard_normal((16, 16, 3)), renormalize=True)
    sparse = NormalMap.from_array(rng.standard_normal((16, 16, 3)), renormalize=True)
    m = Mask.from_bools(rng.uniform(size=(16, 16)) > 0.5)
    fused = fuse_normal_gt(pseudo, sparse, m)
    assert np.array_equal(fused.vectors[m.bools], sparse.vectors[m.bools])
    assert np.array_equal(fused.vectors[~m.bools], pseudo.vectors[~m.bools])

    # single-pixel weighting reproduces the 1.5 : 1.0 : 0.5 regime ratios
    gt = NormalMap.from_array(np.array([[[0.0, 0.0, 1.0]]]))
    hat = Grid(np.array([[[0.5, 0.0, 1.0]]]))
    ones = Mask.from_bools(np.ones((1, 1), dtype=bool))
    zeros = Mask.from_bools(np.zeros((1, 1), dtype=bool))
    on_sparse = weighted_normal_loss(gt, hat, ones, zeros)
    unreliable = weighted_normal_loss(gt, hat, zeros, ones)
    reliable = weighted_normal_loss(gt, hat, zeros, zeros)
    assert on_sparse == pytest.approx(0.0625, abs=1e-15)
    assert (on_sparse / unreliable, on_sparse / reliable) == (1.5, 3.0)
    assert unreliable / reliable == 2.0
    report("normal pipeline (1e-6 plane normals, exact fusion, 1.5:1.0:0.5 weights)")


# --- criterion 5: loss constants ---------------------------------------------

def test_loss_constants():
    h = w = 4
    valid = Mask.from_bools(np.ones((h, w), dtype=bool))
    gt = DisparityMap.from_array(np.full((h, w), 10.0))

    def conf(v):
        return ConfidenceMap.from_array(np.full((h, w), v))

    # regime 1: accurate disparity penalizes low confidence
    low_err = DisparityMap.from_array(np.full((h, w), 10.3))  # err 0.3 < 0.5
    assert confidence_loss(conf(1.0), gt, low_err, valid) == 0.0
    assert confidence_loss(conf(0.2), gt, low_err, valid) == pytest.approx(0.8, abs=1e-12)
    # regime 2: dead zone between 0.5 and 1.5
    mid_err = DisparityMap.from_array(np.full((h, w), 11.0))
    for c in (0.0, 0.5, 1.0):
        assert confidence_loss(conf(c), gt, mid_err, valid) == 0.0
    # regime 3: gross errors penalize high confidence
    big_err = DisparityMap.from_array(np.full((h, w), 12.0))  # err 2 > 1.5
    assert confidence_loss(conf(1.0), gt, big_err, valid) == 1.0
    assert confidence_loss(conf(0.0), gt, big_err, valid) == 0.0

    # published total-loss coefficients against hand-computed sums
    weights = LossWeights()
    assert weights.lambda_scale == (1.0, 0.8, 0.8, 0.6)
    assert (weights.lambda_d, weights.lambda_n, weights.lambda_c) == (5.0, 50.0, 1.0)
    terms = [(0.2, 0.01, 0.4), (0.1, 0.02, 0.3), (0.3, 0.03, 0.2), (0.4, 0.04, 0.1)]
    expected = (1.0 * (5 * 0.2 + 50 * 0.01 + 1 * 0.4)
                + 0.8 * (5 * 0.1 + 50 * 0.02 + 1 * 0.3)
                + 0.8 * (5 * 0.3 + 50 * 0.03 + 1 * 0.2)
                + 0.6 * (5 * 0.4 + 50 * 0.04 + 1 * 0.1))
    assert abs(total_loss(terms) - expected) < 1e-12
    assert abs(total_loss([(1, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, 0)]) - 5.0) < 1e-12
    assert abs(total_loss([(0, 0, 0)] * 3 + [(0, 1, 0)]) - 30.0) < 1e-12
    report("loss constants (0.5/1.5 confidence regimes, scale weights to 1e-12)")


# --- criterion 6: desk-scale mechanism replication ----------------------------

def test_nonlocal_beats_local_on_corrupted_boundary():
    h, w = 96, 160
    bg = PlaneSpec(0.0, 0.0, 6.0, (0, 0, h, w), texture_seed=1)
    fg = PlaneSpec(0.4, 0.0, -4.0, (20, 40, 70, 120), texture_seed=2)
    scene = gen_planar_scene([bg, fg], h, w)

    # corrupt a 3 px band around the plane boundary with sigma = 2 px noise
    on_fg = np.zeros((h, w), dtype=bool)
    on_fg[20:70, 40:120] = True
    edge = np.zeros((h, w), dtype=bool)
    for ax, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        edge |= np.roll(on_fg, shift, axis=ax) != on_fg
    band = np.zeros((h, w), dtype=bool)
    for dy in range(-3, 4):
        for dx in range(-3, 4):
            band |= np.roll(np.roll(edge, dy, axis=0), dx, axis=1)
    rng = np.random.default_rng(42)
    noisy = np.maximum(scene.disparity_gt.values
                       + 2.0 * rng.standard_normal((h, w)) * band, 0.0)
    d_noisy = DisparityMap.from_array(noisy)

    err = warped_error(scene.left, scene.right, d_noisy)
    conf = ConfidenceMap.from_array(1.0 - err.values / max(float(np.max(err.values)), 1e-12))

    steps = 4
    offsets, affinity = heuristic_offsets_from_normal(scene.normal_gt, err, radius=5)
    refined_nonlocal = iterate_propagation(d_noisy, offsets, affinity, conf, steps=steps)

    _, affinity_local = heuristic_offsets_from_normal(scene.normal_gt, err, radius=1)
    refined_local = d_noisy
    for _ in range(steps):
        refined_local = propagate_local(refined_local, affinity_local, conf)

    gt = scene.disparity_gt.values
    epe_nonlocal = float(np.mean(np.abs(refined_nonlocal.values - gt)[band]))
    epe_local = float(np.mean(np.abs(refined_local.values - gt)[band]))
    reduction = 1.0 - epe_nonlocal / epe_local
    assert reduction >= 0.30, (epe_nonlocal, epe_local)
    report(f"mechanism replication (boundary-band EPE: non-local {epe_nonlocal:.3f} "
           f"vs local {epe_local:.3f}, reduction {100 * reduction:.0f}% >= 30%)")


# --- criterion 7: format round trips and the metric oracle -------------------

def test_format_round_trips_and_metric_oracle():
    # PFM round trip, both endiannesses
    rng = np.random.default_rng(6)
    for channels in (1, 3):
        g = Grid(rng.standard_normal((6, 5, channels)).astype(np.float32))
        for scale in (-1.0, 1.0):
            blob = io_formats.write_pfm(g, scale=scale)
            back, s = io_formats.read_pfm(blob)
            assert np.array_equal(back.data, g.data)
            assert io_formats.write_pfm(back, s) == blob

    # KITTI PNG: exhaustive over all 16-bit samples
    samples = np.arange(65536, dtype=np.uint16).reshape(256, 256)
    d = DisparityMap.from_array(samples.astype(np.float64) / 256.0)
    valid = Mask.from_bools(samples != 0)
    d2, valid2 = io_formats.read_kitti_disparity(
        io_formats.write_kitti_disparity(d, valid))
    assert np.array_equal(d2.values, d.values)
    assert np.array_equal(valid2.values, valid.values)

    # metric oracle on constructed error fields
    gt = DisparityMap.from_array(np.full((2, 4), 50.0))
    hat = np.full((2, 4), 50.0)
    hat[:, 2:] = 54.0
    m = evaluate(gt, DisparityMap.from_array(hat),
                 Mask.from_bools(np.ones((2, 4), dtype=bool))).all
    assert m.epe == 2.0
    assert m.rmse == pytest.approx(np.sqrt(8.0), abs=1e-12)
    assert (m.p1, m.p3, m.bad2, m.bad4, m.d1) == (0.5, 0.5, 0.5, 0.0, 0.5)

    uniform = evaluate(DisparityMap.from_array(np.full((3, 3), 10.0)),
                       DisparityMap.from_array(np.full((3, 3), 12.5)),
                       Mask.from_bools(np.ones((3, 3), dtype=bool))).all
    assert (uniform.epe, uniform.p1, uniform.p3) == (2.5, 1.0, 0.0)
    assert (uniform.bad2, uniform.bad4, uniform.d1) == (1.0, 0.0, 0.0)
    assert uniform.rmse == pytest.approx(2.5, abs=1e-12)
    report("format round trips (PFM, exhaustive 16-bit PNG) and metric oracle")
