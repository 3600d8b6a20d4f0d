import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densecorr.evaluation import normalizer, pck, pck_alpha, pck_curve
from densecorr.exceptions import ConfigError, ShapeError
from oracles import pck_loop


def test_pck_basic(rng):
    gt = rng.uniform(0, 100, size=(10, 2))
    assert pck(gt, gt, 0.5) == 1.0
    shifted = gt + [3.0, 4.0]  # every error exactly 5
    assert pck(shifted, gt, 5.0) == 0.0
    assert pck(shifted, gt, 5.0 + 1e-9) == 1.0


def test_pck_counted_example():
    gt = np.zeros((3, 2))
    pred = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 20.0]])
    assert pck(pred, gt, 10) == pytest.approx(2 / 3, abs=0)


def test_pck_errors():
    with pytest.raises(ShapeError):
        pck(np.zeros((2, 2)), np.zeros((3, 2)), 1)
    with pytest.raises(ShapeError):
        pck(np.zeros((0, 2)), np.zeros((0, 2)), 1)


def test_normalizers():
    assert normalizer((100, 200), "max_dim") == 200
    assert normalizer((40, 30), "diagonal") == 50
    with pytest.raises(ConfigError):
        normalizer((1, 1), "area")


def test_pck_alpha(rng):
    gt = rng.uniform(0, 50, size=(40, 2))
    pred = gt + rng.normal(0, 8, size=gt.shape)
    assert pck_alpha(pred, gt, 0.1, (100, 200)) == pck(pred, gt, 20.0)
    assert pck_alpha(pred, gt, 0.1, (40, 30), "diagonal") == pck(pred, gt, 5.0)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigError):
            pck_alpha(pred, gt, bad, (10, 10))


def test_curve_perfect_and_step():
    gt = np.zeros((4, 2))
    c = pck_curve(gt, gt)
    assert c.thresholds[0] == 1 and c.thresholds[-1] == 100 and len(c.thresholds) == 100
    assert np.all(c.accuracy == 1.0)
    c = pck_curve(np.array([[50.5, 0.0]]), np.zeros((1, 2)))
    assert np.all(c.accuracy[c.thresholds <= 50] == 0)
    assert np.all(c.accuracy[c.thresholds >= 51] == 1)
    with pytest.raises(ConfigError):
        pck_curve(gt, gt, 10, 5)


def test_curve_consistent_with_pck(rng):
    gt = rng.uniform(0, 100, size=(60, 2))
    pred = gt + rng.normal(0, 20, size=gt.shape)
    c = pck_curve(pred, gt)
    for t, a in zip(c.thresholds, c.accuracy):
        assert a == pck(pred, gt, t)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.floats(-500, 500), st.floats(-500, 500))
def test_pck_properties(seed, n, tx, ty):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 64, size=(n, 2))
    pred = gt + rng.normal(0, 10, size=gt.shape)
    c = pck_curve(pred, gt)
    assert np.all(np.diff(c.accuracy) >= 0)
    assert np.all((c.accuracy >= 0) & (c.accuracy <= 1))
    # translation invariance on a rounding-free shift
    shift = np.array([np.round(tx), np.round(ty)])
    for t in (1.0, 5.0, 10.0):
        assert pck(pred + shift, gt + shift, t) == pytest.approx(pck(pred, gt, t), abs=1.0 / n + 1e-12)
        assert pck(pred, gt, t) == pck_loop(pred, gt, t)


def test_curve_csv(tmp_path):
    c = pck_curve(np.zeros((2, 2)), np.zeros((2, 2)), 1, 3)
    c.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == ["threshold,accuracy", "1,1.0", "2,1.0", "3,1.0"]
