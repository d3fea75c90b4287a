import numpy as np
import pytest

from ds2cf.baselines import ccf_fit, ccf_label_matrix, cf_fit, cf_objective
from ds2cf.data import DataMatrix, GroundTruth, SemiSupervisedSplit, split_semi_supervised
from ds2cf.errors import NumericalError


def small(seed=0, d=8, n=12):
    return DataMatrix(np.random.default_rng(seed).uniform(0, 1, (d, n)))


class TestCf:
    @pytest.mark.parametrize("seed", range(3))
    def test_monotone(self, seed):
        res = cf_fit(small(seed), 3, max_iters=100, tol=0.0, seed=seed)
        assert len(res.objective) == 101
        assert np.all(np.diff(res.objective) <= 1e-12 * res.objective[0])

    def test_objective_definition(self):
        x = small().values
        w, v = np.eye(12)[:, :3], np.eye(12)[:, :3]
        resid = x.copy()
        resid[:, :3] = 0.0
        assert cf_objective(x, w, v) == pytest.approx(np.sum(resid ** 2))

    def test_nonnegative_and_deterministic(self):
        a = cf_fit(small(), 4, max_iters=30, seed=2)
        b = cf_fit(small(), 4, max_iters=30, seed=2)
        np.testing.assert_array_equal(a.v, b.v)
        assert a.w.min() >= 0 and a.v.min() >= 0

    def test_converges_with_loose_tolerance(self):
        res = cf_fit(small(), 3, max_iters=200, tol=1e6)
        assert res.converged and res.iterations == 1

    def test_non_finite_raises(self):
        x = small().values.copy()
        x[0, 0] = np.inf
        with pytest.raises(NumericalError):
            cf_fit(x, 2, max_iters=2)


class TestCcf:
    def test_label_matrix(self):
        split = SemiSupervisedSplit(np.array([0, 2, 1]), np.array([3, 4]), np.array([1, 1, 2]), 2)
        a = ccf_label_matrix(split)
        expect = np.zeros((5, 4))
        expect[[0, 1], 0] = 1
        expect[2, 1] = 1
        expect[3, 2] = expect[4, 3] = 1
        np.testing.assert_array_equal(a, expect)

    def test_same_class_rows_equal(self):
        truth = GroundTruth(np.repeat([1, 2, 3], 4))
        split = split_semi_supervised(truth, 0.5, 1)
        res = ccf_fit(small(1), split, 3, max_iters=40)
        v = res.v
        for cls in (1, 2, 3):
            rows = v[: split.l][split.labels == cls]
            np.testing.assert_array_equal(rows, np.broadcast_to(rows[0], rows.shape))

    @pytest.mark.parametrize("seed", range(3))
    def test_monotone(self, seed):
        truth = GroundTruth(np.repeat([1, 2], 6))
        split = split_semi_supervised(truth, 0.5, seed)
        res = ccf_fit(small(seed), split, 3, max_iters=100, tol=0.0, seed=seed)
        assert np.all(np.diff(res.objective) <= 1e-12 * res.objective[0])

    def test_no_labels_equals_cf(self):
        x = small(4)
        split = SemiSupervisedSplit(np.array([], dtype=int), np.arange(12), np.array([], dtype=int), 0)
        ccf = ccf_fit(x, split, 3, max_iters=50, seed=4)
        cf = cf_fit(x, 3, max_iters=50, seed=4)
        assert ccf.iterations == cf.iterations
        np.testing.assert_allclose(ccf.w, cf.w, atol=1e-12)
        np.testing.assert_allclose(ccf.representation(), cf.v, atol=1e-12)

    def test_one_label_per_class_no_unlabeled_equals_cf(self):
        # A is then a permutation matrix, so V = A Z is CF on permuted samples
        x = small(5, n=4)
        split = SemiSupervisedSplit(np.arange(4), np.array([], dtype=int), np.array([1, 2, 3, 4]), 4)
        ccf = ccf_fit(x, split, 2, max_iters=50, seed=5)
        cf = cf_fit(x, 2, max_iters=50, seed=5)
        np.testing.assert_allclose(ccf.representation(), cf.v, atol=1e-12)

    def test_representation_original_order(self):
        truth = GroundTruth(np.array([2, 1, 2, 1, 1, 2]))
        split = split_semi_supervised(truth, 0.5, 0)
        res = ccf_fit(small(6, n=6), split, 2, max_iters=20)
        np.testing.assert_array_equal(res.representation()[split.order], res.v)
