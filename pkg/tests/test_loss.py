import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densecorr.correspondences import CorrespondenceSet
from densecorr.exceptions import ConfigError, DomainError
from densecorr.featuremap import FeatureMap, feature_at, lookup
from densecorr.gradcheck import check_contrastive_loss, numerical_gradient, relative_error
from densecorr.loss import (
    LossConfig,
    contrastive_loss_backward,
    contrastive_loss_forward,
    mine_hard_negatives,
    random_negatives,
)
from oracles import lookup_loop, mine_loop


def point_map(vectors, stride=1):
    """A 1 x n grid holding the given vectors, image size 1 x n*stride."""
    v = np.asarray(vectors, dtype=float)
    return FeatureMap(v.T[None, :, None, :], stride, (1, v.shape[0] * stride))


def test_feature_at_grid_site_and_midpoint(rng):
    f = rng.normal(size=(1, 4, 5, 6))
    fm = FeatureMap(f, 2, (10, 12))
    np.testing.assert_array_equal(feature_at(fm, 4.0, 6.0), f[0, :, 3, 2])
    np.testing.assert_allclose(feature_at(fm, 5.0, 6.0), (f[0, :, 3, 2] + f[0, :, 3, 3]) / 2, rtol=1e-15)


def test_lookup_matches_blend_oracle(rng):
    f = rng.normal(size=(1, 5, 6, 7))
    fm = FeatureMap(f, 4, (24, 28))
    xs = rng.uniform(0, 28, size=30)
    ys = rng.uniform(0, 24, size=30)
    got, _ = lookup(fm, xs, ys)
    for k in range(30):
        np.testing.assert_allclose(got[k], lookup_loop(f, 4, xs[k], ys[k]), rtol=0, atol=1e-12)


def test_lookup_outside_image(rng):
    fm = FeatureMap(rng.normal(size=(1, 2, 3, 3)), 2, (6, 6))
    with pytest.raises(DomainError):
        feature_at(fm, 6.0, 1.0)
    with pytest.raises(DomainError):
        feature_at(fm, 1.0, -0.1)


def _pairs(s, n=1):
    return CorrespondenceSet(np.zeros(n), np.zeros(n), np.arange(n, dtype=float), np.zeros(n), s)


def test_loss_identical_positive_is_zero():
    F = point_map([[1.0, 2.0]])
    loss, _ = contrastive_loss_forward(F, F, _pairs([1]))
    assert loss == 0.0


def test_loss_inactive_negative_is_zero():
    loss, cache = contrastive_loss_forward(point_map([[0.0, 0.0]]), point_map([[0.6, 0.8]]),
                                           _pairs([0]), LossConfig(0.5))
    assert loss == 0.0
    d1, d2 = contrastive_loss_backward(cache)
    assert not d1.any() and not d2.any()


def test_loss_mixed_example():
    # positive at distance 1, negative at distance 0.25, margin 0.5, N = 2
    F1 = point_map([[0.0], [0.0]])
    F2 = point_map([[1.0], [0.25]])
    loss, _ = contrastive_loss_forward(F1, F2, _pairs([1, 0], 2), LossConfig(0.5))
    assert abs(loss - 0.265625) < 1e-12


def test_loss_empty_and_bad_margin():
    F = point_map([[1.0]])
    with pytest.raises(ConfigError):
        contrastive_loss_forward(F, F, _pairs([], 0))
    with pytest.raises(ConfigError):
        LossConfig(0.0)


def test_positive_gradient_direction():
    F1 = point_map([[1.0, 2.0]])
    F2 = point_map([[0.5, -1.0]])
    _, cache = contrastive_loss_forward(F1, F2, _pairs([1]))
    d1, d2 = contrastive_loss_backward(cache)
    np.testing.assert_allclose(d1[0, :, 0, 0], [0.5, 3.0], rtol=1e-15)
    np.testing.assert_allclose(d2, -d1)


def test_zero_distance_negative_has_zero_gradient():
    F = point_map([[1.0, 2.0]])
    loss, cache = contrastive_loss_forward(F, F, _pairs([0]), LossConfig(1.0))
    assert loss == 0.5
    d1, _ = contrastive_loss_backward(cache)
    assert not d1.any()


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradient_through_lookup(seed):
    assert check_contrastive_loss(np.random.default_rng(seed)) < 1e-5


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
def test_loss_non_negative(seed, margin):
    rng = np.random.default_rng(seed)
    F1 = FeatureMap(rng.normal(size=(1, 3, 4, 4)), 2, (8, 8))
    F2 = FeatureMap(rng.normal(size=(1, 3, 4, 4)), 2, (8, 8))
    n = 6
    pairs = CorrespondenceSet(rng.uniform(0, 8, n), rng.uniform(0, 8, n), rng.uniform(0, 8, n),
                              rng.uniform(0, 8, n), rng.integers(0, 2, n))
    loss, _ = contrastive_loss_forward(F1, F2, pairs, LossConfig(margin))
    assert loss >= 0


def test_hinge_continuous_at_margin():
    m = 0.7
    vals = []
    for d in (m - 1e-9, m, m + 1e-9):
        loss, _ = contrastive_loss_forward(point_map([[0.0]]), point_map([[d]]), _pairs([0]), LossConfig(m))
        vals.append(loss)
    assert max(vals) < 1e-17


# mining ------------------------------------------------------------------

def test_mining_constant_map_tie_breaks_to_first_site(rng):
    f1 = FeatureMap(rng.normal(size=(1, 3, 8, 8)), 4, (32, 32))
    f2 = FeatureMap(np.ones((1, 3, 8, 8)), 4, (32, 32))
    positives = CorrespondenceSet([5.0, 5.0], [5.0, 5.0], [30.0, 10.0], [30.0, 10.0], [1, 1])
    neg = mine_hard_negatives(f1, f2, positives, radius_px=16)
    # site 0 sits at (0, 0): far from (30, 30), within 16 px of (10, 10)
    assert len(neg) == 1
    assert (neg.xp[0], neg.yp[0], neg.s[0]) == (0.0, 0.0, 0)


def test_mining_planted_match(rng):
    f1 = rng.normal(size=(1, 8, 8, 8))
    f2 = rng.normal(size=(1, 8, 8, 8))
    f2[0, :, 7, 6] = f1[0, :, 1, 1]
    positives = CorrespondenceSet([4.0], [4.0], [4.0], [4.0], [1])
    neg = mine_hard_negatives(FeatureMap(f1, 4, (32, 32)), FeatureMap(f2, 4, (32, 32)), positives, 16)
    assert (neg.x[0], neg.y[0], neg.xp[0], neg.yp[0]) == (4.0, 4.0, 24.0, 28.0)


def test_mining_near_neighbour_is_not_negative(rng):
    f1 = rng.normal(size=(1, 8, 8, 8))
    f2 = rng.normal(size=(1, 8, 8, 8))
    f2[0, :, 2, 3] = f1[0, :, 1, 1]  # (12, 8) is 5 px from the truth (8, 11)
    positives = CorrespondenceSet([4.0], [4.0], [8.0], [11.0], [1])
    neg = mine_hard_negatives(FeatureMap(f1, 4, (32, 32)), FeatureMap(f2, 4, (32, 32)), positives, 16)
    assert len(neg) == 0


def test_mining_matches_double_loop(rng):
    for _ in range(5):
        d = int(rng.integers(1, 10))
        gh, gw = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        stride = int(rng.integers(1, 5))
        f1 = rng.normal(size=(1, d, gh, gw))
        f2 = rng.normal(size=(1, d, gh, gw))
        h, w = gh * stride, gw * stride
        n = 20
        pts = np.stack([rng.uniform(0, w, n), rng.uniform(0, h, n), rng.uniform(0, w, n), rng.uniform(0, h, n)], 1)
        positives = CorrespondenceSet(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3], np.ones(n))
        neg = mine_hard_negatives(FeatureMap(f1, stride, (h, w)), FeatureMap(f2, stride, (h, w)), positives, 3.0)
        expected = mine_loop(f1, f2, stride, pts, 3.0)
        assert list(zip(neg.x, neg.y, neg.xp, neg.yp)) == expected


def test_mining_rejects_negative_input(rng):
    fm = FeatureMap(rng.normal(size=(1, 2, 2, 2)), 1, (2, 2))
    with pytest.raises(ConfigError):
        mine_hard_negatives(fm, fm, CorrespondenceSet([0.0], [0.0], [0.0], [0.0], [0]))


def test_random_negatives_distance_and_determinism():
    rng = np.random.default_rng(3)
    n = 1000
    positives = CorrespondenceSet(rng.uniform(0, 48, n), rng.uniform(0, 48, n), rng.uniform(0, 48, n),
                                  rng.uniform(0, 48, n), np.ones(n), (48, 48), (48, 48))
    neg = random_negatives(positives, 16.0, 7)
    assert np.all(np.hypot(neg.xp - positives.xp, neg.yp - positives.yp) > 16.0)
    assert np.all(neg.s == 0)
    again = random_negatives(positives, 16.0, 7)
    np.testing.assert_array_equal(neg.xp, again.xp)
    np.testing.assert_array_equal(neg.yp, again.yp)


def test_random_negatives_zero_distance_and_unsatisfiable():
    positives = CorrespondenceSet([1.0], [1.0], [2.0], [2.0], [1], (5, 5), (5, 5))
    assert len(random_negatives(positives, 0.0, 0)) == 1
    with pytest.raises(ConfigError):
        random_negatives(positives, 100.0, 0)
