import math

import numpy as np
import pytest

from oracles import chi_quantile, mahalanobis_oracle, percentile_linear
from vspyct_gp import Dataset, TreeConfig, fit_tree
from vspyct_gp.exceptions import InvalidInput
from vspyct_gp.gating import (Leaf, SupportRegion, calibrate_tau, fit_support, gate_weight, gated_predict,
                              mahalanobis, percentile_inclusive, sigmoid, support_reg)
from vspyct_gp.gp import LINEAR_PLUS_RBF, fit_gp, gp_predict


def make_leaf(X, y, tau=1.0, T=0.25, eps2=1e-3, gp=True, family=LINEAR_PLUS_RBF):
    X = np.atleast_2d(X)
    model = fit_gp(X, y, family) if gp else None
    return Leaf(0, np.arange(len(y)), float(np.mean(y)), model, fit_support(X, support_reg(X, 1e-6)),
                tau, T, eps2)


class TestSupport:
    def test_single_point(self):
        lam = 0.01
        r = fit_support([[1.0, 2.0]], lam)
        np.testing.assert_allclose(r.cov, lam * np.eye(2))
        np.testing.assert_allclose(r.inv_cov, np.eye(2) / lam)
        assert mahalanobis(r, [4.0, 6.0]) == pytest.approx(5.0 / math.sqrt(lam))

    def test_identity_covariance_sample(self):
        X = np.random.default_rng(0).standard_normal((10_000, 2))
        r = fit_support(X, 1e-6)
        assert np.all(np.abs(r.inv_cov - np.eye(2)) < 0.1)

    def test_axis_scaled_data(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((20_000, 2)) * np.array([1.0, 10.0])
        r = fit_support(X, 1e-6)
        d1 = mahalanobis(r, r.centroid + [1.0, 0.0])
        d2 = mahalanobis(r, r.centroid + [0.0, 1.0])
        assert d2 / d1 == pytest.approx(0.1, rel=0.05)

    def test_invariants(self):
        rng = np.random.default_rng(2)
        r = fit_support(rng.standard_normal((15, 4)) @ rng.standard_normal((4, 4)), 1e-6)
        assert np.max(np.abs(r.inv_cov - r.inv_cov.T)) <= 1e-10
        assert np.all(np.linalg.eigvalsh(r.inv_cov) > 0)
        assert mahalanobis(r, r.centroid) == 0.0

    def test_regularization_scale(self):
        X = np.array([[0.0, 0.0], [2.0, 4.0]])
        assert support_reg(X, 1e-6) == pytest.approx(1e-6 * np.mean([2.0, 8.0]))
        assert support_reg(X[:1], 1e-6) == 1e-9
        assert support_reg(np.zeros((5, 2)), 1e-6) == 1e-9

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInput):
            fit_support(np.empty((0, 2)), 1e-6)
        with pytest.raises(InvalidInput):
            fit_support([[0.0]], 0.0)


class TestMahalanobis:
    def test_euclidean_case(self):
        r = SupportRegion(np.zeros(2), np.eye(2), 0.0, 1)
        assert mahalanobis(r, [3.0, 4.0]) == pytest.approx(5.0, abs=1e-14)

    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            A = rng.standard_normal((3, 3))
            cov = A @ A.T + 0.1 * np.eye(3)
            c = rng.standard_normal(3)
            x = rng.standard_normal(3)
            r = SupportRegion(c, cov, 0.0, 3)
            assert mahalanobis(r, x) == pytest.approx(mahalanobis_oracle(x, c, cov), abs=1e-10, rel=1e-10)

    def test_rows(self):
        rng = np.random.default_rng(4)
        r = fit_support(rng.standard_normal((30, 2)), 1e-6)
        X = rng.standard_normal((5, 2))
        np.testing.assert_allclose(mahalanobis(r, X), [mahalanobis(r, x) for x in X], rtol=1e-13)


class TestGateWeight:
    def test_at_threshold(self):
        assert gate_weight(2.0, 2.0, 0.3) == 0.5

    def test_far_outside(self):
        assert gate_weight(1.0 + 10 * 0.25, 1.0, 0.25) >= 0.9999

    def test_deep_inside(self):
        assert gate_weight(0.0, 5.0, 0.5) == pytest.approx(1 / (1 + math.exp(10)), rel=1e-12)
        assert gate_weight(0.0, 5.0, 0.5) == pytest.approx(4.54e-5, rel=1e-3)

    def test_sigmoid_is_stable(self):
        assert sigmoid(-1000.0) == 0.0
        assert sigmoid(1000.0) == 1.0
        np.testing.assert_allclose(sigmoid(np.array([-2.0, 0.0, 2.0])),
                                   [1 / (1 + math.e ** 2), 0.5, 1 / (1 + math.e ** -2)])


class TestGatedPredict:
    def test_prototype_inside_support(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((20, 2))
        leaf = make_leaf(X, X @ [1.0, 2.0], tau=50.0)
        m, v, w = gated_predict(leaf, leaf.support.centroid)
        assert w < 1e-80
        assert m == pytest.approx(leaf.prototype, abs=1e-9)
        assert v == pytest.approx(leaf.noise_floor, rel=1e-9)

    def test_leaf_without_gp(self):
        leaf = make_leaf(np.zeros((3, 2)) + [[0], [1], [2]], np.array([1.0, 2.0, 4.0]), gp=False)
        assert gated_predict(leaf, np.array([100.0, -50.0])) == (leaf.prototype, leaf.noise_floor, 0.0)

    def test_far_outside_tracks_gp(self):
        x = np.linspace(0, 1, 25)[:, None]
        y = 3 * x[:, 0] + 0.01 * np.random.default_rng(6).standard_normal(25)
        leaf = make_leaf(x, y, tau=1.0)
        xq = np.array([4.0])
        m, v, w = gated_predict(leaf, xq)
        mu, s2 = gp_predict(leaf.gp, xq)
        assert abs(m - mu) <= abs(1 - w) * abs(mu - leaf.prototype) + 1e-9
        assert abs(v - s2) <= abs(1 - w) * abs(s2 - leaf.noise_floor) + 1e-9
        assert w > 0.999

    def test_baseline_flag(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((10, 2))
        leaf = make_leaf(X, X[:, 0])
        assert gated_predict(leaf, np.array([9.0, 9.0]), baseline=True) == (
            leaf.prototype, leaf.noise_floor, 0.0)

    def test_leaf_validation(self):
        region = fit_support([[0.0]], 1.0)
        with pytest.raises(InvalidInput):
            Leaf(0, np.array([0]), 0.0, None, region, 0.0, 0.25, 1e-3)
        with pytest.raises(InvalidInput):
            Leaf(0, np.array([0]), 0.0, None, region, 1.0, 0.25, 0.0)


class TestCalibrateTau:
    def test_percentile_method(self):
        values = np.arange(1, 101)
        assert percentile_inclusive(values, 99) == pytest.approx(99.01, abs=1e-12)
        rng = np.random.default_rng(8)
        v = rng.exponential(size=37)
        assert percentile_inclusive(v, 99) == pytest.approx(percentile_linear(v, 99), rel=1e-14)

    def test_all_at_centroid_floors(self):
        ds = Dataset(np.ones((6, 2)), np.arange(6.0))
        tree = fit_tree(ds, TreeConfig(min_samples_split=100))
        assert calibrate_tau(tree, ds) == 1e-6
        assert tree.tau == 1e-6

    def test_too_few_points(self):
        ds = Dataset(np.ones((1, 2)), np.ones(1))
        tree = fit_tree(ds, TreeConfig(tau=1.0))
        with pytest.raises(InvalidInput):
            calibrate_tau(tree, ds)

    def test_chi_square_radius(self):
        X = np.random.default_rng(9).standard_normal((10_000, 3))
        ds = Dataset(X, np.zeros(10_000))
        tree = fit_tree(ds, TreeConfig(min_samples_split=10**6, min_leaf_gp=10**9, cov_reg=1e-12))
        assert len(tree.leaves) == 1
        assert tree.tau == pytest.approx(chi_quantile(3, 0.99), rel=0.1)

    def test_global_threshold_written_to_every_leaf(self, toy_tree):
        assert len(toy_tree.leaves) > 1
        assert len({leaf.tau for leaf in toy_tree.leaves}) == 1
