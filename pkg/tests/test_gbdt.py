"""Boosted-tree trainer: hand-checked numerics, invariants, serialization."""

import math
import random

import numpy as np
import pytest

from ventureval import gbdt
from ventureval.gbdt import GbdtConfig, fit, from_json, predict, predict_proba, to_json

HAND_X = np.array([[1.0], [2.0], [3.0], [4.0]])
HAND_Y = np.array([1, 1, 0, 0])
HAND_CONFIG = GbdtConfig(
    n_rounds=1, max_depth=1, learning_rate=1.0, reg_lambda=1.0, gamma=0.0,
    min_child_weight=0.0,
)


def test_hand_fixture_first_round_leaf_weight():
    # p = 0.5 everywhere, g = +-0.5, h = 0.25; left child (x <= 2):
    # G_L = -1.0, H_L = 0.5 -> weight = 1.0 / 1.5
    model = fit(HAND_X, HAND_Y, HAND_CONFIG)
    root = model.trees[0]
    assert root.feature == 0 and root.threshold == 2.0
    assert abs(root.left.weight - (1.0 / 1.5)) < 1e-9
    assert abs(root.right.weight - (-1.0 / 1.5)) < 1e-9


def test_hand_fixture_probability_after_one_round():
    model = fit(HAND_X, HAND_Y, HAND_CONFIG)
    proba = predict_proba(model, np.array([1.5]))
    assert abs(proba - 1.0 / (1.0 + math.exp(-2.0 / 3.0))) < 1e-12
    assert abs(proba - 0.6608) < 1e-3


def test_identical_features_give_prior_only():
    X = np.ones((8, 3))
    y = np.array([1, 1, 1, 0, 0, 0, 0, 0])
    model = fit(X, y, GbdtConfig(n_rounds=5))
    prior = y.mean()
    assert abs(predict_proba(model, X[0]) - prior) < 1e-12


def test_linearly_separable_reaches_perfect_training_accuracy():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 6))
    y = (X[:, 2] > 0.25).astype(float)  # oracle: exact threshold rule
    assert 0 < y.sum() < 200
    model = fit(X, y, GbdtConfig(n_rounds=20, learning_rate=0.5))
    preds = gbdt.predict_many(model, X)
    assert (preds == y).all()


def test_predict_is_thresholded_proba():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 4))
    y = (X[:, 0] + rng.normal(scale=0.3, size=50) > 0).astype(float)
    model = fit(X, y, GbdtConfig(n_rounds=10))
    for row in rng.normal(size=(25, 4)):
        assert predict(model, row) == (1 if predict_proba(model, row) >= 0.5 else 0)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        fit(np.ones((4, 2)), np.ones(4))


def test_nan_feature_rejected():
    X = np.ones((4, 2))
    X[1, 0] = float("nan")
    with pytest.raises(ValueError):
        fit(X, np.array([0, 1, 0, 1]))


def test_nan_prediction_input_rejected():
    model = fit(HAND_X, HAND_Y, HAND_CONFIG)
    with pytest.raises(ValueError):
        predict_proba(model, np.array([float("nan")]))


def test_probabilities_strictly_inside_unit_interval():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(120, 3)) * 10
    y = (X[:, 0] > 0).astype(float)
    model = fit(X, y, GbdtConfig(n_rounds=60, learning_rate=0.3))
    probas = gbdt.predict_proba_many(model, X)
    assert np.all(probas > 0.0) and np.all(probas < 1.0)


def _tree_structure(node):
    if node.is_leaf:
        return ("leaf",)
    return ("split", node.feature, _tree_structure(node.left), _tree_structure(node.right))


def _model_structure(model):
    return [_tree_structure(t) for t in model.trees]


def test_monotone_transform_leaves_structure_unchanged():
    rng = np.random.default_rng(12)
    n = 80
    # unique values per column so ranks are unambiguous
    X = np.stack([rng.permutation(n).astype(float) for _ in range(3)], axis=1)
    y = (X[:, 0] + 0.5 * X[:, 1] > n * 0.7).astype(float)
    config = GbdtConfig(n_rounds=10)
    base = fit(X, y, config)

    X2 = X.copy()
    X2[:, 1] = np.exp(X2[:, 1] / n * 4.0)  # strictly monotone transform
    transformed = fit(X2, y, config)
    assert _model_structure(base) == _model_structure(transformed)


def test_determinism_and_serialization_round_trip():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(100, 6))
    y = (X[:, 1] - X[:, 4] > 0).astype(float)
    config = GbdtConfig(n_rounds=15)
    a = fit(X, y, config)
    b = fit(X, y, config)
    assert to_json(a) == to_json(b)

    restored = from_json(to_json(a))
    grid = rng.normal(size=(40, 6))
    assert np.allclose(
        gbdt.predict_proba_many(a, grid), gbdt.predict_proba_many(restored, grid)
    )


def test_train_loss_non_increasing_fuzz():
    rng = random.Random(77)
    for _ in range(10):
        np_rng = np.random.default_rng(rng.randrange(10**6))
        n = rng.randrange(30, 120)
        d = rng.randrange(1, 5)
        X = np_rng.normal(size=(n, d))
        logits = X @ np_rng.normal(size=d)
        y = (np_rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
        if y.sum() in (0, n):
            continue
        config = GbdtConfig(
            n_rounds=25, learning_rate=rng.choice([0.05, 0.1, 0.3]), gamma=0.0
        )
        model = fit(X, y, config)
        losses = model.train_loss
        for earlier, later in zip(losses, losses[1:]):
            assert later <= earlier + 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        GbdtConfig(n_rounds=0).validate()
    with pytest.raises(ValueError):
        GbdtConfig(learning_rate=1.5).validate()
    with pytest.raises(ValueError):
        GbdtConfig(reg_lambda=-1.0).validate()


def test_model_format_version_checked():
    with pytest.raises(ValueError):
        from_json('{"format_version": 99}')
