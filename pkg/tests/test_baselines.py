import numpy as np
import pytest

import reference
from vitalhmm.baselines import (
    LAMBDA_GRID,
    elm_fit,
    logreg_cv_grid,
    logreg_fit,
    logreg_grad,
    logreg_objective,
    stratified_folds,
)
from vitalhmm.errors import ContractError, TrainingError


def two_blob_data(n=60, gap=3.0, seed=0):
    rng = np.random.default_rng(seed)
    X0 = rng.normal(-gap / 2, 1.0, size=(n // 2, 2))
    X1 = rng.normal(gap / 2, 1.0, size=(n // 2, 2))
    X = np.vstack([X0, X1])
    y = np.repeat([0, 1], n // 2)
    perm = rng.permutation(n)
    return X[perm], y[perm]


class TestLogregCore:
    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(15, 4))
        y = rng.integers(0, 2, size=15).astype(float)
        w = rng.normal(size=4)
        b = 0.3
        lam = 0.05
        gw, gb = logreg_grad(X, y, w, b, lam)
        holder = [w, np.array([b])]

        def f():
            return logreg_objective(X, y, holder[0], float(holder[1][0]), lam)

        fd_w, fd_b = reference.central_difference(f, holder, h=1e-6)
        assert np.abs(gw - fd_w).max() <= 1e-6
        assert abs(gb - fd_b[0]) <= 1e-6

    def test_zero_weights_objective_is_log_two(self):
        X = np.zeros((8, 3))
        y = np.array([0, 1] * 4, dtype=float)
        assert np.isclose(
            logreg_objective(X, y, np.zeros(3), 0.0, 1.0), np.log(2.0), atol=1e-12
        )

    def test_fit_reaches_stationary_point(self):
        X, y = two_blob_data(seed=2)
        m = logreg_fit(X, y.astype(float), lam=0.1)
        gw, gb = logreg_grad(X, y.astype(float), m.weights, m.bias, 0.1)
        assert np.sqrt(gw @ gw + gb * gb) <= 1e-8

    def test_convex_objective_init_independent(self):
        X, y = two_blob_data(seed=3)
        lam = 0.5
        base = logreg_fit(X, y.astype(float), lam)
        rng = np.random.default_rng(4)
        for _ in range(5):
            init = (rng.normal(size=2) * 3.0, float(rng.normal()))
            other = logreg_fit(X, y.astype(float), lam, init=init)
            o1 = logreg_objective(X, y.astype(float), base.weights, base.bias, lam)
            o2 = logreg_objective(X, y.astype(float), other.weights, other.bias, lam)
            assert abs(o1 - o2) <= 1e-6

    def test_separable_data_classified(self):
        X, y = two_blob_data(gap=6.0, seed=5)
        m = logreg_fit(X, y.astype(float), lam=1e-4)
        assert (m.predict(X) == y).mean() == 1.0
        proba = m.predict_proba(X)
        assert np.all((proba >= 0) & (proba <= 1))

    def test_heavy_penalty_shrinks_weights(self):
        X, y = two_blob_data(seed=6)
        small = logreg_fit(X, y.astype(float), lam=1e-4)
        big = logreg_fit(X, y.astype(float), lam=1e3)
        assert np.linalg.norm(big.weights) < np.linalg.norm(small.weights)

    def test_single_class_rejected(self):
        X = np.random.default_rng(7).normal(size=(10, 2))
        with pytest.raises(TrainingError):
            logreg_fit(X, np.zeros(10), lam=0.1)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            logreg_fit(np.zeros((5, 2)), np.zeros(4), lam=0.1)


class TestStratifiedFolds:
    def test_balanced_assignment(self):
        y = np.repeat([0, 1], 9)
        assignment = stratified_folds(y, 3, seed=0)
        for fold in range(3):
            sel = assignment == fold
            assert sel.sum() == 6
            assert y[sel].sum() == 3

    def test_deterministic(self):
        y = np.random.default_rng(8).integers(0, 2, size=30)
        a = stratified_folds(y, 3, seed=9)
        b = stratified_folds(y, 3, seed=9)
        assert np.array_equal(a, b)

    def test_uneven_counts_spread_within_one(self):
        y = np.array([0] * 7 + [1] * 4)
        assignment = stratified_folds(y, 3, seed=10)
        sizes = np.bincount(assignment, minlength=3)
        assert sizes.max() - sizes.min() <= 2


class TestCvGrid:
    def test_default_grid_pinned(self):
        assert LAMBDA_GRID.shape == (11,)
        assert np.isclose(LAMBDA_GRID[0], 1e-5)
        assert np.isclose(LAMBDA_GRID[-1], 1e5)

    def test_picks_usable_model(self):
        X, y = two_blob_data(n=90, gap=4.0, seed=11)
        m = logreg_cv_grid(X, y, seed=12)
        assert (m.predict(X) == y).mean() > 0.95
        assert m.lam in LAMBDA_GRID

    def test_tie_goes_to_larger_penalty(self):
        # perfectly separable with a huge margin: every penalty that still
        # classifies correctly ties at accuracy 1, so the largest wins
        X, y = two_blob_data(n=30, gap=40.0, seed=13)
        m = logreg_cv_grid(X, y, grid=[1e-4, 1e-2], seed=14)
        assert m.lam == 1e-2

    def test_too_few_samples_rejected(self):
        with pytest.raises(ContractError):
            logreg_cv_grid(np.zeros((2, 2)), np.array([0, 1]), n_folds=3)


class TestElm:
    def test_interpolates_with_enough_units(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(25, 3))
        y = rng.integers(0, 2, size=25)
        m = elm_fit(X, y, n_hidden=100, ridge=0.0, seed=16)
        assert (m.predict(X) == y).mean() == 1.0
        assert np.abs(m.score(X) - y).max() < 1e-6

    def test_ridge_zero_uses_min_norm_solution(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(10, 2))
        y = rng.integers(0, 2, size=10).astype(float)
        m = elm_fit(X, y, n_hidden=50, ridge=0.0, seed=18)
        assert np.allclose(m.score(X), y, atol=1e-8)

    def test_seed_freezes_hidden_layer(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(20, 4))
        y = rng.integers(0, 2, size=20)
        a = elm_fit(X, y, seed=20)
        b = elm_fit(X, y, seed=20)
        assert np.array_equal(a.hidden_weights, b.hidden_weights)
        assert np.array_equal(a.readout_weights, b.readout_weights)
        c = elm_fit(X, y, seed=21)
        assert not np.array_equal(a.hidden_weights, c.hidden_weights)

    def test_hidden_weights_uniform_range(self):
        X = np.zeros((5, 3))
        y = np.array([0, 1, 0, 1, 0])
        m = elm_fit(X, y, n_hidden=200, ridge=1e-6, seed=22)
        assert m.hidden_weights.min() >= -1.0
        assert m.hidden_weights.max() <= 1.0
        assert m.hidden_weights.shape == (200, 3)

    def test_ridge_solution_solves_normal_equations(self):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 2, size=40).astype(float)
        ridge = 0.5
        m = elm_fit(X, y, n_hidden=10, ridge=ridge, seed=24)
        H = m.hidden(X)
        G = np.hstack([H, np.ones((40, 1))])
        beta = np.append(m.readout_weights, m.readout_bias)
        penalty = np.eye(11)
        penalty[-1, -1] = 0.0
        resid = G.T @ (G @ beta - y) + ridge * penalty @ beta
        assert np.abs(resid).max() <= 1e-8

    def test_bad_inputs_rejected(self):
        with pytest.raises(ContractError):
            elm_fit(np.zeros((4, 2)), np.zeros(3))
        with pytest.raises(ContractError):
            elm_fit(np.zeros((4, 2)), np.zeros(4), n_hidden=0)
