import numpy as np
import pytest

from stereoprop.errors import EmptyValidSet, ShapeMismatch
from stereoprop.grid import ConfidenceMap, DisparityMap, Grid, Mask, NormalMap
from stereoprop.losses import (
    LossWeights,
    confidence_loss,
    disparity_loss,
    evaluate,
    normal_loss,
    smooth_l1,
    smooth_l1_array,
    total_loss,
)


def dmap(arr):
    return DisparityMap.from_array(np.asarray(arr, dtype=float))


def ones_mask(h, w):
    return Mask.from_bools(np.ones((h, w), dtype=bool))


def test_smooth_l1_values():
    assert smooth_l1(0.0) == 0.0
    assert smooth_l1(0.5) == 0.125
    assert smooth_l1(2.0) == 1.5
    assert smooth_l1(-2.0) == 1.5
    assert smooth_l1(-0.5) == 0.125


def test_smooth_l1_c1_continuity_at_switch():
    eps = 1e-8
    below = smooth_l1(1.0 - eps)
    above = smooth_l1(1.0 + eps)
    assert abs(above - below) < 1e-7
    slope_below = (smooth_l1(1.0 - eps) - smooth_l1(1.0 - 2 * eps)) / eps
    slope_above = (smooth_l1(1.0 + 2 * eps) - smooth_l1(1.0 + eps)) / eps
    assert abs(slope_below - 1.0) < 1e-6
    assert abs(slope_above - 1.0) < 1e-6


def test_smooth_l1_array_matches_scalar():
    xs = np.linspace(-3, 3, 41)
    assert np.array_equal(smooth_l1_array(xs), [smooth_l1(v) for v in xs])


def test_disparity_loss_cases():
    gt = dmap(np.full((4, 4), 7.0))
    assert disparity_loss(gt, gt, ones_mask(4, 4)) == 0.0
    off = dmap(np.full((4, 4), 7.5))
    assert disparity_loss(gt, off, ones_mask(4, 4)) == pytest.approx(0.125, abs=1e-15)


def test_disparity_loss_respects_mask():
    gt = dmap(np.full((2, 2), 5.0))
    hat = dmap([[5.0, 5.0], [9.0, 9.0]])
    top_only = Mask.from_bools(np.array([[True, True], [False, False]]))
    assert disparity_loss(gt, hat, top_only) == 0.0
    bottom_only = Mask.from_bools(np.array([[False, False], [True, True]]))
    assert disparity_loss(gt, hat, bottom_only) == 3.5  # smooth_l1(4) = 3.5


def test_disparity_loss_empty_mask():
    gt = dmap(np.zeros((2, 2)))
    with pytest.raises(EmptyValidSet):
        disparity_loss(gt, gt, Mask.from_bools(np.zeros((2, 2), dtype=bool)))


def test_normal_loss_cases():
    n = NormalMap.from_array(np.tile([0.0, 0.0, 1.0], (3, 3, 1)))
    assert normal_loss(n, n) == 0.0
    # raw prediction with uniform channel error 0.5
    hat = Grid(n.vectors + 0.5)
    assert normal_loss(n, hat) == pytest.approx(0.125, abs=1e-15)
    single_gt = NormalMap.from_array(np.array([[[0.0, 0.6, 0.8]]]))
    single_hat = Grid(np.array([[[0.0, 0.6, 2.8]]]))  # error (0, 0, 2)
    assert normal_loss(single_gt, single_hat) == pytest.approx(1.5 / 3.0, abs=1e-15)


def test_confidence_loss_three_regimes():
    h = w = 2
    valid = ones_mask(h, w)
    gt = dmap(np.full((h, w), 10.0))
    full_conf = ConfidenceMap.from_array(np.ones((h, w)))
    # perfect disparity, confident: no penalty
    assert confidence_loss(full_conf, gt, gt, valid) == 0.0
    # error 2 px > c2 = 1.5 with c = 1: penalty 1 per pixel
    off2 = dmap(np.full((h, w), 12.0))
    assert confidence_loss(full_conf, gt, off2, valid) == 1.0
    # dead zone: error 1.0 in [0.5, 1.5] contributes nothing for any c
    off1 = dmap(np.full((h, w), 11.0))
    for c in (0.0, 0.3, 1.0):
        conf = ConfidenceMap.from_array(np.full((h, w), c))
        assert confidence_loss(conf, gt, off1, valid) == 0.0
    # low error with low confidence: penalty 1 - c
    low_conf = ConfidenceMap.from_array(np.full((h, w), 0.25))
    assert confidence_loss(low_conf, gt, gt, valid) == 0.75


def test_confidence_loss_monotonicity():
    h = w = 3
    valid = ones_mask(h, w)
    gt = dmap(np.full((h, w), 5.0))
    accurate = gt
    wrong = dmap(np.full((h, w), 9.0))
    losses_low, losses_high = [], []
    for c in np.linspace(0.0, 1.0, 6):
        conf = ConfidenceMap.from_array(np.full((h, w), float(c)))
        losses_low.append(confidence_loss(conf, gt, accurate, valid))
        losses_high.append(confidence_loss(conf, gt, wrong, valid))
    assert all(a >= b for a, b in zip(losses_low, losses_low[1:]))
    assert all(a <= b for a, b in zip(losses_high, losses_high[1:]))


def test_confidence_loss_validation():
    gt = dmap(np.zeros((2, 2)))
    conf = ConfidenceMap.from_array(np.ones((2, 2)))
    with pytest.raises(ValueError):
        confidence_loss(conf, gt, gt, ones_mask(2, 2), c1=2.0, c2=1.0)
    with pytest.raises(EmptyValidSet):
        confidence_loss(conf, gt, gt, Mask.from_bools(np.zeros((2, 2), bool)))


def test_total_loss_published_coefficients():
    zeros = [(0.0, 0.0, 0.0)] * 4
    assert total_loss(zeros) == 0.0
    only_d0 = [(1.0, 0.0, 0.0)] + [(0.0, 0.0, 0.0)] * 3
    assert total_loss(only_d0) == pytest.approx(5.0, abs=1e-15)
    only_n3 = [(0.0, 0.0, 0.0)] * 3 + [(0.0, 1.0, 0.0)]
    assert total_loss(only_n3) == pytest.approx(30.0, abs=1e-15)
    only_c1 = [(0.0, 0.0, 0.0), (0.0, 0.0, 1.0)] + [(0.0, 0.0, 0.0)] * 2
    assert total_loss(only_c1) == pytest.approx(0.8, abs=1e-15)


def test_total_loss_requires_four_scales():
    with pytest.raises(ValueError):
        total_loss([(0.0, 0.0, 0.0)] * 3)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda_scale=(1.0, 0.8))
    with pytest.raises(ValueError):
        LossWeights(lambda_d=-1.0)
    with pytest.raises(ValueError):
        LossWeights(c1=2.0, c2=1.0)


def test_evaluate_perfect_prediction():
    gt = dmap(np.full((4, 4), 10.0))
    rep = evaluate(gt, gt, ones_mask(4, 4))
    m = rep.all
    assert (m.epe, m.p1, m.p3, m.d1, m.bad2, m.bad4, m.rmse) == (0, 0, 0, 0, 0, 0, 0)
    assert m.count == 16


def test_evaluate_uniform_error_2_5():
    gt = dmap(np.full((3, 3), 10.0))
    hat = dmap(np.full((3, 3), 12.5))
    m = evaluate(gt, hat, ones_mask(3, 3)).all
    assert m.epe == 2.5
    assert m.rmse == pytest.approx(2.5, abs=1e-12)
    assert m.avg_err == 2.5
    assert (m.p1, m.p3) == (1.0, 0.0)
    assert (m.bad2, m.bad4) == (1.0, 0.0)
    assert m.d1 == 0.0  # 2.5 px fails the 3 px branch even though > 5% of 10


def test_evaluate_mixed_two_value_errors():
    gt = dmap(np.full((2, 4), 50.0))
    hat_vals = np.full((2, 4), 50.0)
    hat_vals[:, 2:] = 54.0  # half the pixels 4 px off
    m = evaluate(gt, dmap(hat_vals), ones_mask(2, 4)).all
    assert m.epe == 2.0
    assert m.rmse == pytest.approx(np.sqrt(8.0), abs=1e-12)
    assert m.p3 == 0.5
    assert m.bad2 == 0.5 and m.bad4 == 0.0
    assert m.d1 == 0.5  # 4 px > 3 px and > 5% of 50 = 2.5


def test_evaluate_d1_compound_rule():
    gt = dmap(np.full((1, 2), 100.0))
    hat = dmap(np.array([[104.0, 100.0]]))
    m = evaluate(gt, hat, ones_mask(1, 2)).all
    assert m.d1 == 0.0  # 4 px exceeds 3 px but not 5% of 100


def test_evaluate_region_splits_partition():
    rng = np.random.default_rng(0)
    gt = dmap(rng.uniform(1, 50, (6, 6)))
    hat = dmap(gt.values + rng.uniform(0, 5, (6, 6)))
    valid = Mask.from_bools(rng.uniform(size=(6, 6)) > 0.2)
    occ = Mask.from_bools(rng.uniform(size=(6, 6)) > 0.5)
    rep = evaluate(gt, hat, valid, occ)
    assert rep.occluded.count + rep.non_occluded.count == rep.all.count
    assert rep.all.p1 >= rep.all.p3
    assert rep.all.bad2 >= rep.all.bad4


def test_evaluate_omits_empty_region():
    gt = dmap(np.full((2, 2), 5.0))
    rep = evaluate(gt, gt, ones_mask(2, 2), Mask.from_bools(np.zeros((2, 2), bool)))
    assert rep.occluded is None
    assert rep.non_occluded is not None
    assert "occluded" not in rep.to_dict()


def test_evaluate_empty_valid_set():
    gt = dmap(np.zeros((2, 2)))
    with pytest.raises(EmptyValidSet):
        evaluate(gt, gt, Mask.from_bools(np.zeros((2, 2), bool)))


def test_evaluate_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        evaluate(dmap(np.zeros((2, 2))), dmap(np.zeros((2, 3))), ones_mask(2, 2))
