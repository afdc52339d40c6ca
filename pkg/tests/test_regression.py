"""Least-squares term fitting and the held-out prediction error."""

import numpy as np
import pytest

from conftest import manufactured_field
from transportid.errors import CollinearityError, ValidationError
from transportid.library import (CoefficientVector, DesignMatrix, LibrarySpec,
                                 normalize_design)
from transportid.params import ModelParams
from transportid.preprocess import split_train_test
from transportid.regression import (PredictionErrorEvaluator, fit_design,
                                    least_squares_fit, prediction_error)
from transportid.scenarios import true_parameters


def random_design(n=300, k=4, seed=0):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(n, k)) @ np.diag(rng.uniform(0.5, 3.0, k))
    truth = rng.normal(size=k)
    y = phi @ truth + rng.uniform(0.5, 1.5)
    ids = tuple(f"t{j}" for j in range(k))
    return DesignMatrix(phi, y, ids), truth


def test_exact_recovery_without_noise():
    for seed in range(5):
        dm, truth = random_design(seed=seed)
        norm, stats = normalize_design(dm)
        alpha = least_squares_fit(norm)
        phys = alpha.values * stats.y_std / stats.col_std
        np.testing.assert_allclose(phys, truth, rtol=1e-10)


def test_fit_is_a_least_squares_minimum():
    rng = np.random.default_rng(3)
    dm, _ = random_design(seed=3)
    noisy = DesignMatrix(dm.phi, dm.y + rng.normal(0.0, 0.3, dm.n_points),
                         dm.term_ids)
    norm, _ = normalize_design(noisy)
    alpha = least_squares_fit(norm)
    best = np.sum((norm.y - norm.phi @ alpha.values) ** 2)
    for _ in range(20):
        other = alpha.values + rng.normal(0.0, 0.05, alpha.values.size)
        assert best <= np.sum((norm.y - norm.phi @ other) ** 2) + 1e-12


def test_matches_normal_equations():
    dm, _ = random_design(n=500, seed=7)
    rng = np.random.default_rng(8)
    noisy = DesignMatrix(dm.phi, dm.y + rng.normal(0.0, 0.1, 500), dm.term_ids)
    norm, _ = normalize_design(noisy)
    alpha = least_squares_fit(norm)
    direct = np.linalg.solve(norm.phi.T @ norm.phi, norm.phi.T @ norm.y)
    np.testing.assert_allclose(alpha.values, direct, rtol=1e-9)


def test_underdetermined_fit_rejected():
    dm, _ = random_design(n=3, k=4, seed=1)
    with pytest.raises(ValidationError):
        least_squares_fit(dm)


def test_duplicate_column_raises_collinearity():
    rng = np.random.default_rng(4)
    base = rng.normal(size=(100, 1))
    phi = np.hstack([base, base * 2.0, rng.normal(size=(100, 1))])
    y = phi @ np.array([1.0, 1.0, 1.0]) + rng.normal(0.0, 0.01, 100)
    dm = DesignMatrix(phi, y, ("adv", "dis", "d3"))
    norm, _ = normalize_design(dm)
    with pytest.raises(CollinearityError, match="adv|dis"):
        least_squares_fit(norm)


def test_prediction_error_definition():
    """eps must use training statistics on the raw held-out columns."""
    train, truth = random_design(n=200, seed=11)
    rng = np.random.default_rng(12)
    test_phi = rng.normal(size=(50, truth.size)) + 0.3
    test_y = test_phi @ truth + rng.normal(0.0, 0.2, 50)
    test_dm = DesignMatrix(test_phi, test_y, train.term_ids)
    norm, stats = normalize_design(train)
    alpha = least_squares_fit(norm)
    got = prediction_error(test_dm, alpha, stats)
    phi_n = (test_phi - stats.col_mean) / stats.col_std
    y_n = (test_y - stats.y_mean) / stats.y_std
    expected = np.sum((y_n - phi_n @ alpha.values) ** 2)
    assert got == pytest.approx(expected, rel=1e-13)
    assert got > 0.0


def test_prediction_error_guards():
    train, _ = random_design(n=100, seed=13)
    norm, stats = normalize_design(train)
    alpha = least_squares_fit(norm)
    empty = DesignMatrix(np.empty((0, 4)), np.empty(0), train.term_ids)
    with pytest.raises(ValidationError):
        prediction_error(empty, alpha, stats)
    renamed = DesignMatrix(train.phi, train.y, ("a", "b", "c", "d"))
    with pytest.raises(ValidationError):
        prediction_error(renamed, alpha, stats)


def test_prediction_error_invariant_to_point_order():
    train, truth = random_design(n=150, seed=20)
    rng = np.random.default_rng(21)
    test_phi = rng.normal(size=(60, truth.size))
    test_y = test_phi @ truth + rng.normal(0.0, 0.1, 60)
    norm, stats = normalize_design(train)
    alpha = least_squares_fit(norm)
    fwd = prediction_error(DesignMatrix(test_phi, test_y, train.term_ids),
                           alpha, stats)
    perm = rng.permutation(60)
    rev = prediction_error(DesignMatrix(test_phi[perm], test_y[perm],
                                        train.term_ids), alpha, stats)
    assert fwd == pytest.approx(rev, rel=1e-13)


def test_manufactured_field_fit_recovers_coefficients():
    """On noise-free analytic data the full 4-term fit lands on the exact
    coefficients with a vanishing intercept."""
    alpha_true = {"adv": -0.01, "dis": 0.01, "fsorp": -0.15, "lsorp": -1.2}
    pts = manufactured_field(alpha_true)
    fit = fit_design(pts, ModelParams.of_sorption(0.6, 90.0),
                     LibrarySpec.basic())
    for tid, target in alpha_true.items():
        assert fit.alpha_phys.value_of(tid) == pytest.approx(target, rel=1e-9)
    assert abs(fit.intercept) < 1e-12
    assert fit.eps < 1e-18


def test_evaluator_matches_unsplit_fit_at_true_parameters():
    pts = manufactured_field({"adv": -0.01, "dis": 0.01, "fsorp": -0.15})
    lib = LibrarySpec.basic().subset(("adv", "dis", "fsorp"))
    ev = PredictionErrorEvaluator(split_train_test(pts, 0.6), lib)
    m_star = ModelParams.of_sorption(0.6, 90.0)
    fit = ev.evaluate(m_star)
    assert fit.eps < 1e-18
    assert fit.eps == ev.eps(m_star)
    np.testing.assert_allclose(
        fit.alpha_phys.values, [-0.01, 0.01, -0.15], rtol=1e-8)
    # Repeated evaluation must be bit-stable (cached static columns).
    again = ev.evaluate(m_star)
    np.testing.assert_array_equal(fit.alpha_norm.values,
                                  again.alpha_norm.values)
    assert fit.eps == again.eps


def test_wrong_exponent_scores_worse_on_real_data(pipeline):
    """The held-out error must prefer the true Freundlich exponent."""
    data = pipeline.dataset("s2")
    lib = LibrarySpec.basic().subset(("adv", "dis", "fsorp"))
    ev = PredictionErrorEvaluator(data.split, lib)
    a_true = true_parameters("s2")["a"]
    good = ev.eps(ModelParams.of_sorption(a_true, 90.0))
    bad = ev.eps(ModelParams.of_sorption(0.4, 90.0))
    assert good < bad / 50.0
