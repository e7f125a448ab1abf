import math

import numpy as np
import pytest

from edgeguard.errors import ParameterError
from edgeguard.robustness import (adversarial_perturb, certified_radius, empirical_lipschitz_component,
                                  estimate_pipeline_lipschitz, fuzz_flips, gaussian_certificate,
                                  gaussian_flip_rate, lipschitz_fusion, robustness_sweep, uniform_ball)


def test_fusion_constant():
    assert lipschitz_fusion(0.5, 2.0, 1.0) == 1.5
    assert lipschitz_fusion(1.0, 2.0, 1.0) == 2.0
    with pytest.raises(ParameterError):
        lipschitz_fusion(1.5, 1.0, 1.0)


def test_radius():
    assert certified_radius(0.8, 0.5, 1.5) == pytest.approx(0.2)
    assert certified_radius(0.5, 0.5, 1.5) == 0.0
    assert certified_radius(0.9, 0.5, 0.0) == math.inf


def test_gaussian_certificate_values():
    assert gaussian_certificate(0.0, 1.5, 0.1) == 1.0
    assert gaussian_certificate(0.3, 1.5, 0.1) == pytest.approx(math.exp(-2.0))


def test_constant_function_has_zero_slope(rng):
    X = rng.normal(size=(50, 3))
    assert empirical_lipschitz_component(lambda Z: np.zeros(len(Z)), X) == 0.0


def test_linear_function_slope(rng):
    w = np.array([3.0, -4.0, 1.0])
    X = rng.normal(size=(200, 3))
    est = empirical_lipschitz_component(lambda Z: Z @ w, X, pair_count=500)
    assert est == pytest.approx(np.linalg.norm(w), rel=0.05)


def test_ball_samples_inside_radius(rng):
    pts = uniform_ball(rng, 5000, 4, 0.3)
    assert np.all(np.linalg.norm(pts, axis=1) < 0.3)


@pytest.fixture(scope="module")
def lipschitz(small_pipeline, small_split):
    Xn = small_pipeline.normalize(small_split[3])
    return Xn, estimate_pipeline_lipschitz(small_pipeline, Xn, pair_count=500, seed=0)


def test_estimate_structure(small_pipeline, lipschitz):
    _, L = lipschitz
    a = small_pipeline.fusion.alpha
    assert L["L_F"] == pytest.approx(1.5 * (a * L["L_e"] + (1 - a) * L["L_s"]))
    assert L["L_F_direct"] <= L["L_F_bound"] + 1e-12


def test_no_flips_inside_certified_radius(small_pipeline, lipschitz):
    Xn, L = lipschitz
    F = small_pipeline.fused_normalized(Xn[:20])
    for k in range(20):
        r = certified_radius(F[k], small_pipeline.tau, L["L_F"])
        assert fuzz_flips(small_pipeline, Xn[k], r, count=2000, seed=k) == 0


def test_noise_flip_rate_within_certificate(small_pipeline, lipschitz):
    Xn, L = lipschitz
    F = small_pipeline.fused_normalized(Xn[:5])
    for k in range(5):
        margin = abs(F[k] - small_pipeline.tau)
        sigma = max(certified_radius(F[k], small_pipeline.tau, L["L_F"]) / 2, 1e-4)
        rate = gaussian_flip_rate(small_pipeline, Xn[k], sigma, draws=5000, seed=k)
        bound = gaussian_certificate(margin, L["L_F"], sigma)
        assert rate <= bound + 3 * math.sqrt(max(bound * (1 - bound), 1e-12) / 5000)


def test_zero_budget_attack_is_identity(small_pipeline, lipschitz):
    Xn, L = lipschitz
    res = adversarial_perturb(small_pipeline, Xn[0], 0.0, L["L_F"])
    assert np.all(res.delta == 0) and res.F_after == res.F_before


def test_attack_step_has_requested_length(small_pipeline, lipschitz):
    Xn, L = lipschitz
    res = adversarial_perturb(small_pipeline, Xn[-1], 0.05, L["L_F"])
    assert res.flat or np.linalg.norm(res.delta) == pytest.approx(0.05)


def test_sweep_success_is_monotone(small_pipeline, lipschitz):
    Xn, L = lipschitz
    rows = robustness_sweep(small_pipeline, Xn[-40:], [0.0, 0.02, 0.1, 0.5], L["L_F"])
    rates = [r["attack_success_rate"] for r in rows]
    assert rates == sorted(rates) and rates[0] == 0.0
    assert all(r["flips_inside_radius"] == 0 for r in rows)
    cover = [r["certified_coverage"] for r in rows]
    assert cover == sorted(cover, reverse=True)


def test_negative_budget_rejected(small_pipeline, lipschitz):
    with pytest.raises(ParameterError):
        adversarial_perturb(small_pipeline, lipschitz[0][0], -0.1)
