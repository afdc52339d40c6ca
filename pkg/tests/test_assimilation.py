"""Damped iterative parameter estimation: bounded transform, gradients,
the update formula and full recovery on analytic data."""

import numpy as np
import pytest

import transportid.assimilation as assim
from conftest import (M_STAR, RECOVERY_STARTS, TIGHT_ASSIM,
                      manufactured_field)
from transportid.assimilation import (AssimilationConfig, fd_gradient,
                                      from_unbounded, lm_step,
                                      run_assimilation, to_unbounded)
from transportid.errors import SolverError, ValidationError
from transportid.library import LibrarySpec
from transportid.params import ModelParams, ParamBounds
from transportid.preprocess import split_train_test
from transportid.regression import PredictionErrorEvaluator

BOUNDS = ParamBounds.default()


class StubObjective:
    """Duck-typed stand-in for the prediction-error evaluator."""

    def __init__(self, fn):
        self._fn = fn

    def eps(self, m: ModelParams) -> float:
        return float(self._fn(m.as_array()))


def adf_evaluator():
    pts = manufactured_field({"adv": -0.01, "dis": 0.01, "fsorp": -0.15})
    lib = LibrarySpec.basic().subset(("adv", "dis", "fsorp"))
    return PredictionErrorEvaluator(split_train_test(pts, 0.6), lib)


def adl_evaluator():
    pts = manufactured_field({"adv": -0.01, "dis": 0.01, "lsorp": -1.2})
    lib = LibrarySpec.basic().subset(("adv", "dis", "lsorp"))
    return PredictionErrorEvaluator(split_train_test(pts, 0.6), lib)


# ----------------------------------------------------- parameter vector

def test_model_params_contracts():
    m = ModelParams.of_sorption(0.7, 100.0)
    assert m.names == ("a", "K_l") and m.n == 2
    assert m["K_l"] == 100.0
    with pytest.raises(KeyError):
        m["rho"]
    np.testing.assert_array_equal(m.as_array(), [0.7, 100.0])
    same = ModelParams.from_array(np.array([0.7, 100.0]))
    assert same == m
    with pytest.raises(ValidationError):
        ModelParams(names=("a",), values=(1.0, 2.0))
    with pytest.raises(ValidationError):
        ModelParams(names=("a", "a"), values=(1.0, 2.0))
    with pytest.raises(ValidationError):
        ModelParams.of_sorption(np.nan, 100.0)


def test_param_bounds_contracts():
    b = ParamBounds.default()
    assert b.lower == (0.25, 30.0) and b.upper == (0.75, 150.0)
    np.testing.assert_array_equal(b.span(), [0.5, 120.0])
    np.testing.assert_array_equal(b.midpoint(), [0.5, 90.0])
    np.testing.assert_allclose(np.diag(b.prior_covariance()),
                               [0.5 ** 2 / 12.0, 120.0 ** 2 / 12.0],
                               rtol=1e-14)
    assert b.contains(ModelParams.of_sorption(0.5, 90.0))
    assert not b.contains(ModelParams.of_sorption(0.8, 90.0))
    assert b.contains(np.array([0.76, 90.0]), margin=0.02)
    with pytest.raises(ValidationError):
        ParamBounds(names=("a",), lower=(1.0,), upper=(0.5,))


def test_assimilation_config_validation():
    with pytest.raises(ValidationError):
        AssimilationConfig(gamma=1.0)
    with pytest.raises(ValidationError):
        AssimilationConfig(tol_rel=0.0)
    with pytest.raises(ValidationError):
        AssimilationConfig(c_eps_scale=0.0)


# --------------------------------------------------- bounded transform

def test_transform_midpoint_maps_to_origin():
    lower, upper = BOUNDS.lower_array(), BOUNDS.upper_array()
    np.testing.assert_allclose(to_unbounded(BOUNDS.midpoint(), lower, upper),
                               0.0, atol=1e-14)


def test_transform_round_trip():
    lower, upper = BOUNDS.lower_array(), BOUNDS.upper_array()
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = lower + rng.uniform(0.01, 0.99, 2) * (upper - lower)
        back = from_unbounded(to_unbounded(m, lower, upper), lower, upper)
        np.testing.assert_allclose(back, m, rtol=1e-12)


def test_transform_image_stays_inside_bounds():
    lower, upper = BOUNDS.lower_array(), BOUNDS.upper_array()
    for s in (-700.0, -50.0, 0.0, 50.0, 700.0):
        m = from_unbounded(np.full(2, s), lower, upper)
        assert np.all(m >= lower) and np.all(m <= upper)
        assert np.all(np.isfinite(m))
    # Monotone in each coordinate.
    grid = np.linspace(-20.0, 20.0, 41)
    a_vals = [from_unbounded(np.array([s, 0.0]), lower, upper)[0]
              for s in grid]
    assert np.all(np.diff(a_vals) > 0.0)


# ------------------------------------------------------------ gradient

def test_fd_gradient_exact_on_quadratic():
    coef = np.array([3.0, -0.5])

    def f(v):
        return float(coef @ (v * v))

    m = np.array([0.4, 70.0])
    g = fd_gradient(f, m, BOUNDS, 0.01)
    np.testing.assert_allclose(g, 2.0 * coef * m, rtol=1e-9)


def test_fd_gradient_span_fallback_at_zero():
    def f(v):
        return float(2.0 * v[0] + v[1] ** 2)

    g = fd_gradient(f, np.array([0.0, 0.0]), BOUNDS, 0.01)
    np.testing.assert_allclose(g, [2.0, 0.0], atol=1e-10)


def test_fd_gradient_second_order_error_bound():
    def f(v):
        return float(np.exp(v[0]))

    a = 0.5
    h = 0.01 * a
    g = fd_gradient(f, np.array([a, 90.0]), BOUNDS, 0.01)
    err = abs(g[0] - np.exp(a))
    assert 0.0 < err <= np.exp(a) * h ** 2 / 6.0 * 1.01
    assert g[1] == 0.0


def test_gradient_is_zero_along_unused_parameter():
    ev = adf_evaluator()

    def f(v):
        return ev.eps(ModelParams.from_array(v))

    g = fd_gradient(f, np.array([0.5, 90.0]), BOUNDS, 0.01)
    assert g[0] != 0.0
    assert g[1] == 0.0


# ---------------------------------------------------------- the update

def test_lm_step_without_gradient_relaxes_to_prior():
    c_m = np.diag([0.2, 3.0])
    m, m_pr = np.array([0.6, 80.0]), np.array([0.5, 90.0])
    lam = 4.0
    out = lm_step(m, m_pr, np.zeros(2), c_m, 1.0, 5.0, lam)
    np.testing.assert_allclose(out, m - (m - m_pr) / (1.0 + lam), rtol=1e-12)
    at_prior = lm_step(m_pr, m_pr, np.zeros(2), c_m, 1.0, 5.0, lam)
    np.testing.assert_allclose(at_prior, m_pr, rtol=1e-14)


def test_lm_step_freezes_under_heavy_damping():
    rng = np.random.default_rng(2)
    m = rng.normal(size=2)
    m_pr = rng.normal(size=2)
    g = rng.normal(size=2)
    c_m = np.diag(rng.uniform(0.5, 2.0, 2))
    out = lm_step(m, m_pr, g, c_m, 1.0, 2.0, 1e9)
    assert np.linalg.norm(out - m) < 1e-7


def test_lm_step_matches_information_form():
    """The covariance-form update must equal the regularized normal
    equations [(1+lam) C_M^-1 + G' C_eps^-1 G] dm = -[C_M^-1 (m-m_pr)
    + G' C_eps^-1 eps]."""
    rng = np.random.default_rng(42)
    for _ in range(1000):
        m = rng.normal(size=2)
        m_pr = rng.normal(size=2)
        g = rng.normal(size=2)
        c_m = np.diag(rng.uniform(0.1, 10.0, 2))
        c_eps = float(rng.uniform(0.01, 10.0))
        eps = float(rng.normal())
        lam = float(rng.uniform(0.0, 100.0))
        got = lm_step(m, m_pr, g, c_m, c_eps, eps, lam)
        h = (1.0 + lam) * np.linalg.inv(c_m) + np.outer(g, g) / c_eps
        rhs = np.linalg.solve(c_m, m - m_pr) + g * eps / c_eps
        expected = m - np.linalg.solve(h, rhs)
        np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-11)


def test_lm_step_singular_scale_guard():
    c_m = np.diag([1.0, 1.0])
    with pytest.raises(SolverError):
        lm_step(np.zeros(2), np.zeros(2), np.zeros(2), c_m, 0.0, 1.0, 1.0)


# ------------------------------------------------------------ statuses

def test_flat_objective_reports_zero_gradient():
    stub = StubObjective(lambda v: 1.0 + (v[0] - 0.5) ** 2)
    tr = run_assimilation(stub, ModelParams.of_sorption(0.5, 90.0), BOUNDS)
    assert tr.status == "zero_gradient"
    assert len(tr.records) == 1
    assert tr.m_final == ModelParams.of_sorption(0.5, 90.0)


def test_kinked_objective_stalls():
    """When every proposal increases the error the damping grows until
    the stall guard trips, leaving the start point untouched."""

    def vee(v):
        d = v[0] - 0.5
        return 1.0 + (3.0 * d if d >= 0.0 else -d)

    tr = run_assimilation(StubObjective(vee),
                          ModelParams.of_sorption(0.5, 90.0), BOUNDS)
    assert tr.status == "stalled"
    assert tr.n_accepted == 1
    assert tr.m_final == ModelParams.of_sorption(0.5, 90.0)
    assert all(not r.accepted for r in tr.records[1:])


def test_proposal_budget_guard(monkeypatch):
    def vee(v):
        d = v[0] - 0.5
        return 1.0 + (3.0 * d if d >= 0.0 else -d)

    monkeypatch.setattr(assim, "_PROPOSAL_BUDGET", 5)
    cfg = AssimilationConfig(lambda_stall=1e300)
    tr = run_assimilation(StubObjective(vee),
                          ModelParams.of_sorption(0.5, 90.0), BOUNDS, cfg)
    assert tr.status == "budget_exhausted"
    assert len(tr.records) == 1 + 5


def test_quartic_valley_converges():
    stub = StubObjective(lambda v: 1.0 + (v[0] - 0.6) ** 4)
    tr = run_assimilation(stub, ModelParams.of_sorption(0.5, 90.0), BOUNDS)
    assert tr.status == "converged"
    eps_seq = tr.accepted_eps()
    assert all(b < a for a, b in zip(eps_seq, eps_seq[1:]))


def test_iteration_cap_reports_max_iterations():
    cfg = AssimilationConfig(tol_rel=1e-9, max_accepted=2, c_eps_scale=1e-6)
    tr = run_assimilation(adf_evaluator(),
                          ModelParams.of_sorption(0.26, 31.0), BOUNDS, cfg)
    assert tr.status == "max_iterations"
    assert tr.n_accepted == 1 + 2


def test_unbounded_minimum_leaves_bounds_without_transform():
    stub = StubObjective(lambda v: 1.0 + (v[0] - 2.0) ** 2)
    cfg = AssimilationConfig(use_bounds_transform_on_violation=False)
    tr = run_assimilation(stub, ModelParams.of_sorption(0.5, 90.0), BOUNDS,
                          cfg)
    assert tr.status == "left_bounds"
    assert not BOUNDS.contains(tr.m_final)


def test_transform_keeps_iterates_inside_bounds():
    stub = StubObjective(lambda v: 1.0 + (v[0] - 2.0) ** 2)
    tr = run_assimilation(stub, ModelParams.of_sorption(0.5, 90.0), BOUNDS)
    assert tr.transformed
    for record in tr.records:
        assert BOUNDS.contains(record.m, margin=1e-12)
    # The constrained optimum sits at the upper bound of a.
    assert tr.m_final["a"] > 0.7


# ------------------------------------------------------------ recovery

def test_freundlich_exponent_recovered_from_any_start():
    """Full loop on analytic Freundlich data: a* back to 1e-3 from every
    corner and interior start."""
    ev = adf_evaluator()
    for start in RECOVERY_STARTS:
        tr = run_assimilation(ev, ModelParams.of_sorption(*start), BOUNDS,
                              TIGHT_ASSIM)
        assert abs(tr.m_final["a"] - M_STAR[0]) <= 1e-3, start
        assert tr.status in ("converged", "stalled", "max_iterations")
        assert BOUNDS.contains(tr.m_final)


def test_langmuir_constant_recovered_from_any_start():
    ev = adl_evaluator()
    for start in RECOVERY_STARTS:
        tr = run_assimilation(ev, ModelParams.of_sorption(*start), BOUNDS,
                              TIGHT_ASSIM)
        rel = abs(tr.m_final["K_l"] - M_STAR[1]) / M_STAR[1]
        assert rel <= 1e-3, start
        assert BOUNDS.contains(tr.m_final)


def test_trace_bookkeeping_on_recovery_run():
    ev = adl_evaluator()
    tr = run_assimilation(ev, ModelParams.of_sorption(0.3, 130.0), BOUNDS,
                          TIGHT_ASSIM)
    eps_seq = tr.accepted_eps()
    assert len(eps_seq) == tr.n_accepted >= 2
    assert all(b < a for a, b in zip(eps_seq, eps_seq[1:]))
    accepted_ms = [r.m for r in tr.records if r.accepted]
    assert tr.m_final == accepted_ms[-1]
    assert tr.eps_final == eps_seq[-1]
    # Rejected proposals raise the damping, accepted ones relax it.
    for prev, cur in zip(tr.records, tr.records[1:]):
        if not cur.accepted:
            assert cur.lam > prev.lam


def test_start_point_failure_is_a_solver_error():
    def broken(v):
        raise FloatingPointError("boom")

    with pytest.raises(SolverError):
        run_assimilation(StubObjective(broken),
                         ModelParams.of_sorption(0.5, 90.0), BOUNDS)
