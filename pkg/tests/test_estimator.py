import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from densecorr import DenseCorrespondenceEstimator
from densecorr.exceptions import ShapeError
from densecorr.network import FeatureNetwork
from densecorr.synth import WarpSpec, generate_dataset
from densecorr.validation import check_image, check_keypoints


@pytest.fixture(scope="module")
def data():
    return generate_dataset(3, WarpSpec(kind="translation", image_shape=(16, 16),
                                        max_translation=2.0, n_correspondences=30, seed=1))


def _small(**kw):
    return DenseCorrespondenceEstimator(channels=(4, 6, 8), steps=3, mining_radius=4, **kw)


def test_params_and_clone():
    est = _small(lr=0.5)
    p = est.get_params()
    assert p["lr"] == 0.5 and p["steps"] == 3 and p["channels"] == (4, 6, 8)
    c = clone(est)
    assert c.get_params() == p
    est.set_params(margin=0.5)
    assert est.margin == 0.5


def test_not_fitted(data):
    with pytest.raises(NotFittedError):
        _small().transform([data[0].img1])


def test_fit_transform_predict_score(data):
    est = _small().fit(data)
    assert est.loss_trace_.shape == (3,)
    feats = est.transform([p.img1 for p in data])
    assert feats.shape == (3, 8, 8, 8)
    np.testing.assert_allclose(np.linalg.norm(feats, axis=1), 1.0, atol=1e-9)
    kp = data[0].pairs.pts1[:5]
    (res,) = est.predict([(data[0].img1, data[0].img2, kp)])
    assert len(res) == 5
    s = est.score(data)
    assert 0.0 <= s <= 1.0
    np.testing.assert_array_equal(est.fit_transform(data)[0], est.transform([data[0].img1])[0])


def test_ratio_and_untrained(data):
    est = _small(ratio=0.5).fit(data)
    kp = data[0].pairs.pts1
    (filtered,) = est.predict([(data[0].img1, data[0].img2, kp)])
    assert len(filtered) <= len(kp)
    assert np.all(filtered.d1 <= 0.5 * filtered.d2 + 1e-12) or np.any(filtered.degenerate)
    base = est.untrained()
    np.testing.assert_array_equal(base.net_.params["conv1.weight"], FeatureNetwork((4, 6, 8)).params["conv1.weight"])


def test_from_network(data):
    net = FeatureNetwork(channels=(4, 6, 8), seed=3)
    est = DenseCorrespondenceEstimator.from_network(net)
    np.testing.assert_array_equal(est.transform(data[0].img1)[0], net.forward(data[0].img1[None])[0][0])


def test_validation_helpers():
    assert check_image(np.zeros((1, 3, 4, 4))).shape == (3, 4, 4)
    with pytest.raises(ShapeError):
        check_image(np.zeros((2, 4, 4)), channels=3)
    with pytest.raises(ValueError):
        check_image(np.full((3, 4, 4), np.nan))
    with pytest.raises(ShapeError):
        check_keypoints(np.zeros((3, 3)))
