import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeguard.errors import DegenerateInputError, LabelError, ParameterError
from edgeguard.fusion import (FusionState, ScoreGaussianFit, ThresholdState, alpha_star, candidate_thresholds,
                              error_bounds, fuse, optimize_threshold, quantile_threshold,
                              smoothed_objective_and_grad, tau_star_gaussian, threshold_objective,
                              threshold_update_step)
from oracles import brute_force_threshold, gaussian_tail

SYMMETRIC = ScoreGaussianFit(0.2, 0.14, 0.5, 0.8, 0.14, 0.5)


def test_fuse_extremes():
    assert fuse(0.4, 0.6, FusionState(alpha=1.0)) == 0.4
    assert fuse(0.4, 0.6, FusionState(alpha=0.0)) == 0.6
    assert fuse(0.4, 0.6, FusionState(alpha=0.5)) == 0.5


def test_alpha_clamped_on_construction():
    assert FusionState(alpha=3.0).alpha == 1.0
    with pytest.raises(ParameterError):
        FusionState(alpha=math.nan)


def test_alpha_star_values():
    assert alpha_star(0.4, 0.6, FusionState()) == pytest.approx(0.6)
    assert alpha_star(0.0, 0.6, FusionState()) == 1.0
    assert alpha_star(0.4, 0.6, FusionState(mu_lr=10.0), log_lr=5.0) == 0.0


def test_alpha_star_guard():
    with pytest.raises(DegenerateInputError):
        alpha_star(0.0, 0.0, FusionState())


def test_alpha_star_variance_penalty():
    a = alpha_star(0.4, 0.6, FusionState(rho=1.0, var_z=1.0))
    assert a == pytest.approx(0.6 / 2.0)


def test_separated_classes_reach_f1_one(rng):
    s = np.concatenate([rng.uniform(0, 0.3, 50), rng.uniform(0.7, 1, 50)])
    y = np.array([0] * 50 + [1] * 50)
    r = optimize_threshold(s, y)
    assert r.f1 == 1.0 and s[:50].max() < r.tau < s[50:].min()


def test_single_class_rejected():
    with pytest.raises(LabelError):
        optimize_threshold([0.1, 0.2], [1, 1])


def test_identical_scores_rejected():
    with pytest.raises(DegenerateInputError):
        optimize_threshold([0.5, 0.5, 0.5], [0, 1, 0])


def test_fp_penalty_pushes_above_benign_max(rng):
    s = rng.normal(size=200)
    y = (rng.random(200) < 0.5).astype(int)
    r = optimize_threshold(s, y, ThresholdState(lam_fp=1e9, eps_fp=0.0))
    assert r.tau >= s[y == 0].max()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_optimizer_equals_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    s = np.round(rng.normal(size=n), 1)
    y = rng.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    if np.unique(s).size < 2:
        s[0] += 1.0
    cfg = ThresholdState(lam_fp=float(rng.uniform(0, 5)), eps_fp=float(rng.uniform(0, 0.3)),
                         rho_tail=float(rng.uniform(0, 0.5)))
    r = optimize_threshold(s, y, cfg)
    tau, obj = brute_force_threshold(s.tolist(), y.tolist(), cfg.lam_fp, cfg.eps_fp, cfg.rho_tail)
    assert abs(r.objective - obj) <= 1e-9
    assert r.tau == pytest.approx(tau)


def test_objective_accepts_vector_tau():
    s, y = np.array([0.1, 0.4, 0.8]), np.array([0, 0, 1])
    cands = candidate_thresholds(s)
    obj, f1, fpr = threshold_objective(cands, s, y, ThresholdState())
    assert obj.shape == cands.shape
    assert threshold_objective(0.6, s, y, ThresholdState())[1] == 1.0


def test_quantile_threshold():
    assert quantile_threshold(np.arange(101.0), 0.1) == pytest.approx(90.0)


def test_smoothed_gradient_matches_differences(rng):
    s = rng.normal(size=60)
    y = (s + rng.normal(size=60) > 0).astype(int)
    cfg = ThresholdState(lam_fp=2.0, eps_fp=0.05, rho_tail=0.1)
    tau, h = 0.1, 1e-6
    _, g = smoothed_objective_and_grad(tau, s, y, cfg, 0.2)
    up, _ = smoothed_objective_and_grad(tau + h, s, y, cfg, 0.2)
    dn, _ = smoothed_objective_and_grad(tau - h, s, y, cfg, 0.2)
    assert g == pytest.approx((up - dn) / (2 * h), rel=1e-5, abs=1e-9)


def test_plateau_gradient_vanishes():
    s = np.array([0.0, 0.05, 0.1, 0.9, 0.95, 1.0])
    y = np.array([0, 0, 0, 1, 1, 1])
    _, g = smoothed_objective_and_grad(0.5, s, y, ThresholdState(), width=0.01)
    assert abs(g) < 1e-6


def test_step_near_optimum_is_small(rng):
    s = np.concatenate([rng.normal(0, 0.1, 300), rng.normal(1, 0.1, 300)])
    y = np.array([0] * 300 + [1] * 300)
    state = ThresholdState(tau=optimize_threshold(s, y).tau)
    width = 0.01 * float(s.max() - s.min())
    before = state.tau
    threshold_update_step(state, s, y, width)
    assert abs(state.tau - before) < width
    assert state.history == [before]


def test_zero_rate_impossible():
    with pytest.raises(ParameterError):
        ThresholdState(eta=0.0)


def test_tau_star_symmetric_fit():
    assert tau_star_gaussian(SYMMETRIC) == pytest.approx(0.5, abs=1e-12)


def test_tau_star_unequal_variances_is_density_crossing():
    fit = ScoreGaussianFit(0.0, 1.0, 0.7, 3.0, 2.0, 0.3)
    tau = tau_star_gaussian(fit)
    dens = lambda x, m, s: math.exp(-(x - m) ** 2 / (2 * s * s)) / s  # noqa: E731
    assert 0.7 * dens(tau, 0, 1) == pytest.approx(0.3 * dens(tau, 3, 2), rel=1e-9)
    grid = np.linspace(-2, 6, 4001)
    assert fit.error_probability(tau) <= min(fit.error_probability(t) for t in grid) + 1e-12


def test_tau_star_no_separation():
    with pytest.raises(DegenerateInputError):
        tau_star_gaussian(ScoreGaussianFit(0.5, 0.1, 0.5, 0.5, 0.1, 0.5))


def test_error_bounds_values():
    assert error_bounds(0.2, SYMMETRIC)["FA_bound"] == 1.0
    b = error_bounds(0.5, SYMMETRIC)
    assert b["FA_bound"] == pytest.approx(math.exp(-0.09 / (2 * 0.14 ** 2)))
    assert b["FA_bound"] == pytest.approx(0.1005, abs=1e-3)
    # required gap sqrt(2 * 0.0392 * ln 100) = 0.601 just exceeds 0.6
    assert not b["separability_ok"]
    assert error_bounds(0.5, SYMMETRIC, eps_target=0.02)["separability_ok"]
    assert error_bounds(0.1, SYMMETRIC)["FA_vacuous"]


@pytest.mark.parametrize("tau", [0.25, 0.4, 0.5, 0.6, 0.75])
def test_bounds_dominate_exact_tails(tau):
    b = error_bounds(tau, SYMMETRIC)
    assert gaussian_tail((tau - 0.2) / 0.14) <= b["FA_bound"]
    assert gaussian_tail((0.8 - tau) / 0.14) <= b["MD_bound"]


def test_gaussian_fit_from_scores(rng):
    s = np.concatenate([rng.normal(0, 1, 500), rng.normal(4, 2, 250)])
    y = np.array([0] * 500 + [1] * 250)
    fit = ScoreGaussianFit.from_scores(s, y)
    assert fit.pi1 == pytest.approx(1 / 3)
    assert fit.mu1 == pytest.approx(s[500:].mean())
    with pytest.raises(LabelError):
        ScoreGaussianFit.from_scores([1.0, 2.0, 3.0], [0, 0, 1])
