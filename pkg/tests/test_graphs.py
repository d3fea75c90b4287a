import numpy as np
import pytest

from ds2cf.data import DataMatrix, SemiSupervisedSplit
from ds2cf.errors import NumericalError
from ds2cf.graphs import (
    graph_reconstruction_loss,
    init_data_graph,
    init_feature_graph,
    update_data_graph,
    update_feature_graph,
)


class TestInit:
    def test_feature_graph_identical_and_orthogonal_rows(self):
        x = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
        s = init_feature_graph(DataMatrix(x))
        assert s[0, 1] == pytest.approx(1.0)
        assert s[0, 2] == 0.0

    def test_feature_graph_symmetric_unit_diagonal(self):
        x = np.random.default_rng(0).uniform(size=(3, 6))
        s = init_feature_graph(x)
        unit = x / np.linalg.norm(x, axis=1, keepdims=True)
        np.testing.assert_allclose(s, unit @ unit.T, atol=1e-12)
        np.testing.assert_array_equal(s, s.T)

    def test_zero_feature_row(self):
        s = init_feature_graph(np.array([[0.0, 0.0], [1.0, 1.0]]))
        np.testing.assert_array_equal(s, np.eye(2))

    def test_data_graph_semi_supervised_weights(self):
        x = np.array([[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0]])
        split = SemiSupervisedSplit(np.array([0, 2, 1]), np.array([3]), np.array([1, 1, 2]), 2)
        s = init_data_graph(split.reorder(DataMatrix(x)).values, split)
        # working order: samples 0, 2, 1, 3
        assert s[0, 1] == 1.0  # same class
        assert s[0, 2] == 0.0  # different classes
        assert s[0, 3] == pytest.approx(1 / np.sqrt(2))
        np.testing.assert_array_equal(np.diag(s), 1.0)

    def test_identical_labeled_unlabeled_pair(self):
        x = np.array([[1.0, 0.0, 1.0], [2.0, 1.0, 2.0]])
        split = SemiSupervisedSplit(np.array([0, 1]), np.array([2]), np.array([1, 2]), 2)
        s = init_data_graph(x, split)
        assert s[0, 2] == pytest.approx(1.0)


class TestUpdates:
    def test_fixed_point(self):
        u = np.random.default_rng(1).uniform(size=(6, 2))
        np.testing.assert_allclose(update_feature_graph(u, np.eye(6)), np.eye(6), atol=1e-10)
        v = np.random.default_rng(2).uniform(size=(8, 3))
        np.testing.assert_allclose(update_data_graph(v, np.eye(8)), np.eye(8), atol=1e-10)

    def test_zero_entries_stay_zero(self):
        rng = np.random.default_rng(3)
        s = rng.uniform(size=(6, 6))
        s[1, 4] = s[0, 0] = 0.0
        u = rng.uniform(size=(6, 2))
        for _ in range(5):
            s = update_feature_graph(u, s)
        assert s[1, 4] == 0.0 and s[0, 0] == 0.0

    @pytest.mark.parametrize("shape,fn", [((6, 2), update_feature_graph), ((8, 3), update_data_graph)])
    def test_loss_non_increasing(self, shape, fn):
        rng = np.random.default_rng(4)
        f = rng.uniform(size=shape)
        s = rng.uniform(size=(shape[0], shape[0]))
        losses = [graph_reconstruction_loss(f, s)]
        for _ in range(10):
            s = fn(f, s)
            losses.append(graph_reconstruction_loss(f, s))
        assert np.all(np.diff(losses) <= 1e-10)

    def test_non_finite_named(self):
        u = np.array([[np.inf, 1.0], [1.0, 1.0]])
        with pytest.raises(NumericalError, match="entry"):
            update_feature_graph(u, np.ones((2, 2)))
