"""scikit-learn style wrapper around the feature network.

``fit`` trains on image pairs with ground-truth correspondences,
``transform`` maps images to dense unit-norm feature arrays, ``predict``
returns nearest-neighbour matches, and ``score`` reports PCK.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .evaluation import pck
from .matching import extract_features, match_keypoints, ratio_test_filter
from .network import FeatureNetwork
from .trainer import TrainConfig, train
from .validation import check_images, check_keypoints, check_pair_dataset


class DenseCorrespondenceEstimator(TransformerMixin, BaseEstimator):
    """Learned dense descriptor for visual correspondence.

    Parameters
    ----------
    channels : tuple of int, default=(16, 32, 64)
        Widths of the three conv layers; the last one is the feature dimension.
    spatial_transformer : bool, default=False
        Insert a convolutional spatial transformer before normalization.
    negatives : {"hard", "random"}, default="hard"
    steps : int, default=800
    lr : float, default=0.03
    momentum : float, default=0.9
    margin : float, default=1.0
    mining_radius : float, default=16.0
        A nearest neighbour farther than this (pixels) from the truth is a negative.
    n_correspondences : int or None, default=300
        Positives sampled per pair and step.
    batch_size : int, default=1
    ratio : float or None, default=None
        If set, ``predict`` drops matches failing the distance-ratio test.
    random_state : int, default=0

    Attributes
    ----------
    net_ : FeatureNetwork
    loss_trace_ : ndarray of shape (steps,)
    train_result_ : TrainResult
    """

    def __init__(self, channels=(16, 32, 64), spatial_transformer=False, negatives="hard",
                 steps=800, lr=0.03, momentum=0.9, margin=1.0, mining_radius=16.0,
                 n_correspondences=300, batch_size=1, ratio=None, random_state=0):
        self.channels = channels
        self.spatial_transformer = spatial_transformer
        self.negatives = negatives
        self.steps = steps
        self.lr = lr
        self.momentum = momentum
        self.margin = margin
        self.mining_radius = mining_radius
        self.n_correspondences = n_correspondences
        self.batch_size = batch_size
        self.ratio = ratio
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, momentum=self.momentum, steps=self.steps, batch_size=self.batch_size,
            margin=self.margin, negatives=self.negatives,
            spatial_transformer=self.spatial_transformer, seed=self.random_state,
            mining_radius=self.mining_radius, n_correspondences=self.n_correspondences,
        )

    def _new_network(self) -> FeatureNetwork:
        return FeatureNetwork(self.channels, spatial_transformer=self.spatial_transformer,
                              seed=self.random_state)

    def fit(self, X, y=None):
        """Train on ``X``: a sequence of ``(img1, img2, CorrespondenceSet)`` or pair objects."""
        cfg = self._train_config()
        data = check_pair_dataset(X, channels=3)
        self.net_ = self._new_network()
        self.train_result_ = train(self.net_, data, cfg)
        self.loss_trace_ = self.train_result_.losses
        return self

    @classmethod
    def from_network(cls, net: FeatureNetwork, **params):
        est = cls(channels=net.channels, spatial_transformer=net.spatial_transformer, **params)
        est.net_ = net
        return est

    def untrained(self) -> "DenseCorrespondenceEstimator":
        """Same hyper-parameters, randomly initialized network (the fitting baseline)."""
        est = type(self)(**self.get_params())
        est.net_ = est._new_network()
        return est

    def transform(self, X):
        """Feature arrays ``(n, d, h/2, w/2)`` for a batch of equally sized images."""
        check_is_fitted(self, "net_")
        images = check_images(X, channels=self.net_.in_channels)
        return np.concatenate([extract_features(self.net_, im).features for im in images])

    def fit_transform(self, X, y=None, **fit_params):
        """Fit on pairs, then return features of each pair's first image."""
        self.fit(X, y)
        return self.transform([img1 for img1, _, _ in check_pair_dataset(X)])

    def predict(self, X):
        """Match keypoints: ``X`` is a sequence of ``(img1, img2, keypoints)``.

        Returns a list of :class:`~densecorr.matching.MatchResult`, one per pair.
        """
        check_is_fitted(self, "net_")
        out = []
        for img1, img2, keypoints in X:
            q = extract_features(self.net_, check_images(img1)[0])
            r = extract_features(self.net_, check_images(img2)[0])
            result = match_keypoints(q, r, check_keypoints(keypoints))
            if self.ratio is not None:
                result = ratio_test_filter(result, self.ratio)
            out.append(result)
        return out

    def score(self, X, y=None, threshold=10.0, max_keypoints=None):
        """Mean PCK@``threshold`` over pairs, matching every ground-truth positive."""
        data = check_pair_dataset(X)
        scores = []
        for img1, img2, pairs in data:
            gt = pairs.subset(pairs.s == 1)
            if max_keypoints is not None:
                gt = gt.subset(slice(0, max_keypoints))
            (result,) = self._without_ratio().predict([(img1, img2, gt.pts1)])
            scores.append(pck(result.pred, gt.pts2, threshold))
        return float(np.mean(scores))

    def _without_ratio(self):
        if self.ratio is None:
            return self
        est = type(self)(**{**self.get_params(), "ratio": None})
        est.net_ = self.net_
        return est
