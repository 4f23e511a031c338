import numpy as np
import pytest

from perftwin.boosting import BoostParams, TreeEnsemble, fit_ensemble, fit_tree, grid_search, multi_rmse, predict_ensemble
from perftwin.domain import feature_matrix
from perftwin.errors import DimensionMismatch, EmptyTrainingSet, ShapeMismatch
from perftwin.gaussian_model import prepare_targets


def _oracle_xy(ds):
    X = feature_matrix(ds.groups)
    Y = np.array([prepare_targets(g).as_vector() for g in ds.groups])
    return X, Y


def test_loss_monotone_on_oracle(small_oracle):
    X, Y = _oracle_xy(small_oracle)
    e = fit_ensemble(X, Y, BoostParams(300, 0.1, 4))
    loss = np.array(e.loss_history)
    assert len(loss) == 301
    assert np.all(np.diff(loss) <= 0)
    assert loss[-1] < 0.05 * loss[0]


def test_zero_iterations_predict_column_means(rng):
    X = rng.normal(size=(30, 3))
    Y = rng.normal(size=(30, 5))
    e = fit_ensemble(X, Y, BoostParams(n_iterations=0))
    assert e.trees == ()
    np.testing.assert_array_equal(e.predict(X), np.tile(Y.mean(axis=0), (30, 1)))
    np.testing.assert_array_equal(e.predict(rng.normal(size=3)), Y.mean(axis=0))


def test_hand_computed_single_split():
    X = np.array([[-2.0], [-1.0], [0.0], [1.0]])
    Y = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    e = fit_ensemble(X, Y, BoostParams(n_iterations=1, learning_rate=1.0, max_depth=1))
    t = e.trees[0]
    assert t.feature[0] == 0 and t.threshold[0] == -0.5
    np.testing.assert_array_equal(e.base_prediction, [0.5, 0.5])
    # leaves hold the mean residuals: -0.5 left, +0.5 right
    np.testing.assert_array_equal(t.value[t.left[0]], [-0.5, -0.5])
    np.testing.assert_array_equal(t.value[t.right[0]], [0.5, 0.5])
    np.testing.assert_array_equal(e.predict(X), Y)
    assert e.loss_history[-1] == 0.0
    np.testing.assert_array_equal(predict_ensemble(e, [0.0]), [1.0, 1.0])


def test_tie_breaks_to_lowest_feature_then_threshold():
    # both features separate the targets identically
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    Y = np.array([[0.0], [0.0], [1.0], [1.0]])
    tree, _ = fit_tree(X, Y - Y.mean(), 1, 1, 1.0)
    assert tree.feature[0] == 0 and tree.threshold[0] == 1.5
    # symmetric target: splits at 0.5 and 2.5 have equal gain
    Y = np.array([[1.0], [0.0], [0.0], [1.0]])
    tree, _ = fit_tree(X[:, :1], Y - Y.mean(), 1, 1, 1.0)
    assert tree.threshold[0] == 0.5


def test_constant_targets_fixed_point(rng):
    X = rng.normal(size=(20, 2))
    Y = np.tile([3.0, -1.0], (20, 1))
    e = fit_ensemble(X, Y, BoostParams(5, 0.5, 3))
    np.testing.assert_array_equal(e.predict(rng.normal(size=(7, 2))), np.tile([3.0, -1.0], (7, 1)))


def test_deep_tree_interpolates_distinct_inputs(rng):
    X = rng.permutation(64).reshape(-1, 1).astype(float)
    Y = rng.normal(size=(64, 3))
    e = fit_ensemble(X, Y, BoostParams(1, 1.0, 64))
    np.testing.assert_allclose(e.predict(X), Y, rtol=0, atol=1e-12)


def test_piecewise_constant(rng):
    X = np.round(rng.uniform(0, 10, size=(50, 2)))
    Y = rng.normal(size=(50, 2))
    e = fit_ensemble(X, Y, BoostParams(20, 0.3, 3))
    # thresholds are midpoints between integer values seen at a node, at
    # least 0.5 from any row reaching it, so a 0.2 shift crosses none
    np.testing.assert_array_equal(e.predict(X), e.predict(X + 0.2))
    np.testing.assert_array_equal(e.predict(X), e.predict(X - 0.2))


def test_min_samples_leaf(rng):
    X = rng.normal(size=(40, 2))
    Y = rng.normal(size=(40, 1))
    tree, _ = fit_tree(X, Y, 6, 7, 1.0)
    leaves = tree.apply(X)
    assert np.bincount(leaves)[np.unique(leaves)].min() >= 7


def test_serialization_bit_exact(small_oracle):
    X, Y = _oracle_xy(small_oracle)
    e = fit_ensemble(X, Y, BoostParams(40, 0.1, 3))
    back = TreeEnsemble.loads(e.dumps())
    np.testing.assert_array_equal(back.predict(X), e.predict(X))
    assert back.loss_history == e.loss_history
    assert back.dumps() == e.dumps()


def test_errors(rng):
    with pytest.raises(EmptyTrainingSet):
        fit_ensemble(np.empty((0, 2)), np.empty((0, 1)))
    with pytest.raises(ShapeMismatch):
        fit_ensemble(np.zeros((3, 2)), np.zeros((4, 1)))
    e = fit_ensemble(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), BoostParams(2, 0.1, 1))
    with pytest.raises(DimensionMismatch):
        e.predict(np.zeros(3))
    for bad in (dict(n_iterations=-1), dict(learning_rate=0), dict(learning_rate=1.5), dict(max_depth=0)):
        with pytest.raises(ValueError):
            BoostParams(**bad)


def test_grid_search_picks_lowest_validation_error(rng):
    X = rng.uniform(-1, 1, size=(80, 2))
    Y = np.c_[np.sin(3 * X[:, 0]), X[:, 1] ** 2]
    base = BoostParams(30)
    best, scores = grid_search(X[:60], Y[:60], X[60:], Y[60:], (1, 3), (0.05, 0.5), base)
    assert set(scores) == {(1, 0.05), (1, 0.5), (3, 0.05), (3, 0.5)}
    d, lr = min(scores, key=scores.get)
    assert (best.max_depth, best.learning_rate) == (d, lr)
    refit = fit_ensemble(X[:60], Y[:60], best)
    assert multi_rmse(Y[60:], refit.predict(X[60:])) == scores[(d, lr)]
