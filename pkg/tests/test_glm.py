import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ecgxai.exceptions import ShapeError, UndefinedMetricError
from ecgxai.glm import (
    LRModel,
    _penalized_grad,
    chi2_2_survival,
    log_loss,
    lr_fit,
    lr_predict,
    lrt,
    nested_lrt,
    permutation_importance,
    spearman,
)


def logistic_data(n, w, b=0.0, seed=0):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(n, len(w)))
    p = 1.0 / (1.0 + np.exp(-(F @ np.asarray(w) + b)))
    return F, (rng.random(n) < p).astype(int)


# fitting

def test_separable_1d_gives_finite_weight():
    F = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    m = lr_fit(F, y, lam=1.0)
    assert m.converged
    assert np.isfinite(m.weights).all() and m.weights[0] > 0
    m_neg = lr_fit(-F, y, lam=1.0)
    assert m_neg.weights[0] < 0


def test_null_labels_give_small_weights():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(500, 4))
    F = (F - F.mean(0)) / F.std(0)
    y = rng.permutation(np.r_[np.ones(250), np.zeros(250)]).astype(int)
    m = lr_fit(F, y, lam=1.0)
    assert np.all(np.abs(m.weights) < 0.5)


def test_weight_norm_shrinks_with_lambda():
    F, y = logistic_data(200, [1.5, -2.0, 0.5], seed=1)
    norms = [np.linalg.norm(lr_fit(F, y, lam).weights) for lam in (0.01, 0.02, 0.04, 0.08, 0.16,
                                                                    0.32, 0.64, 1.28, 2.56)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


@pytest.mark.parametrize("lam", [0.0, 0.1, 3.0])
def test_gradient_vanishes_at_optimum(lam):
    F, y = logistic_data(300, [1.0, -0.5, 0.25], b=0.3, seed=2)
    m = lr_fit(F, y, lam)
    g = _penalized_grad(m.weights, m.intercept, F, y, lam)
    assert np.max(np.abs(g)) < 1e-6


def test_unpenalized_matches_newton_oracle():
    # independent check: scipy's generic optimizer on the same likelihood
    from scipy.optimize import minimize

    F, y = logistic_data(300, [0.8, -1.2], b=-0.4, seed=3)

    def nll(theta):
        z = F @ theta[:2] + theta[2]
        return float(np.sum(np.logaddexp(0, z) - y * z))

    ref = minimize(nll, np.zeros(3), method="BFGS", options={"gtol": 1e-10}).x
    m = lr_fit(F, y, 0.0)
    np.testing.assert_allclose(np.r_[m.weights, m.intercept], ref, atol=1e-5)


def test_unpenalized_needs_more_rows():
    with pytest.raises(ValueError):
        lr_fit(np.ones((2, 3)), [0, 1], lam=0.0)


def test_non_convergence_flagged():
    F, y = logistic_data(100, [1.0], seed=4)
    with pytest.warns(RuntimeWarning):
        m = lr_fit(F, y, 1.0, max_iter=1)
    assert not m.converged


def test_model_round_trip():
    m = LRModel(np.array([0.5, -1.0]), 0.25, 1.0, ["a", "b"])
    back = LRModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.weights, m.weights)
    assert (back.intercept, back.lambda_ridge, back.feature_names) == (0.25, 1.0, ["a", "b"])


# prediction

def test_predict_examples():
    zero = LRModel(np.zeros(2), 0.0, 1.0)
    assert lr_predict(zero, [3.0, -7.0]) == 0.5
    m = LRModel(np.array([0.5, -1.0]), 0.25, 1.0)
    z = 0.5 * 2.0 - 1.0 * 1.0 + 0.25
    assert lr_predict(m, [2.0, 1.0]) == pytest.approx(1 / (1 + math.exp(-z)), abs=1e-15)
    grid = np.column_stack([np.linspace(-3, 3, 20), np.zeros(20)])
    assert np.all(np.diff(lr_predict(m, grid)) > 0)
    with pytest.raises(ShapeError):
        lr_predict(m, [1.0, 2.0, 3.0])


# importance

def test_planted_feature_is_most_important():
    F, y = logistic_data(400, [3.0, 0.0, 0.0], seed=5)
    m = lr_fit(F, y, 1.0)
    imp = permutation_importance(m, F, y, repeats=10, seed=0)
    assert np.argmax(imp) == 0
    assert imp[0] > 5 * np.max(np.abs(imp[1:]))


def test_zero_weight_feature_has_zero_importance():
    F, y = logistic_data(100, [1.0, 0.0], seed=6)
    m = LRModel(np.array([1.0, 0.0]), 0.0, 1.0)
    imp = permutation_importance(m, F, y, repeats=5, seed=1)
    assert imp[1] == pytest.approx(0.0, abs=1e-12)


def test_importance_deterministic_per_seed():
    F, y = logistic_data(100, [1.0, -1.0], seed=7)
    m = lr_fit(F, y, 1.0)
    a = permutation_importance(m, F, y, seed=3)
    b = permutation_importance(m, F, y, seed=3)
    np.testing.assert_array_equal(a, b)
    assert log_loss(m, F, y) > 0


# spearman

def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40])[0] == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1])[0] == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4])[0] == pytest.approx(0.8)


def test_spearman_matches_scipy():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=30), rng.normal(size=30)
    y[::3] = y[0]  # ties
    rho, p = spearman(x, y)
    ref = stats.spearmanr(x, y)
    assert rho == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=5, max_size=20, unique=True), st.integers(0, 99))
def test_spearman_monotone_invariance(xs, seed):
    x = np.array(xs, dtype=float)
    y = np.random.default_rng(seed).normal(size=x.size)
    base = spearman(x, y)[0]
    assert spearman(np.exp(x / 25.0), y)[0] == pytest.approx(base, abs=1e-12)
    assert spearman(x, y ** 3)[0] == pytest.approx(base, abs=1e-12)


def test_spearman_constant_input():
    with pytest.raises(UndefinedMetricError):
        spearman([1, 1, 1], [1, 2, 3])


# likelihood-ratio test

def test_lrt_identical_models():
    F, y = logistic_data(200, [1.0, 0.5], seed=9)
    m = lr_fit(F, y, 0.0, ["a", "b"])
    res = lrt(m, m, F, y)
    assert res["lambda_lr"] == 0.0 and res["p_value"] == 1.0 and not res["reject"]


def test_chi2_2_survival():
    assert chi2_2_survival(5.991) == pytest.approx(0.0500, abs=1e-4)
    assert chi2_2_survival(5.991) == pytest.approx(stats.chi2.sf(5.991, 2), abs=1e-12)


def test_lrt_detects_real_covariates():
    rng = np.random.default_rng(10)
    F = rng.normal(size=(500, 4))
    p = 1 / (1 + np.exp(-(F[:, 0] + 1.5 * F[:, 2] - F[:, 3])))
    y = (rng.random(500) < p).astype(int)
    res = nested_lrt(F[:, :2], F[:, 2:], y)
    assert res["reject"] and res["lambda_lr"] > 0


def test_lrt_rejects_non_nested():
    F, y = logistic_data(50, [1.0, 1.0], seed=11)
    a = lr_fit(F[:, :1], y, 0.0, ["a"])
    b = lr_fit(F[:, 1:], y, 0.0, ["b"])
    with pytest.raises(ValueError):
        lrt(a, b, F, y, feature_names=["a", "b"])


@pytest.mark.parametrize("n_tests", [1, 5])
def test_lrt_null_rejection_rate(n_tests):
    alpha, sims, hits = 0.05, 200, 0
    for s in range(sims):
        rng = np.random.default_rng(1000 + s)
        F = rng.normal(size=(500, 2))
        y = (rng.random(500) < 1 / (1 + np.exp(-F[:, 0]))).astype(int)
        extra = np.column_stack([rng.normal(size=500), rng.integers(0, 2, 500)])
        hits += nested_lrt(F, extra, y, alpha, n_tests)["reject"]
    level = alpha / n_tests
    upper = level + 1.96 * math.sqrt(level * (1 - level) / sims)
    assert hits / sims <= upper
