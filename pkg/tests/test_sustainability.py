import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeguard.errors import DimensionError, DomainError
from edgeguard.stats import pearson
from edgeguard.sustainability import (GAMMA_PRESETS, EnergyModel, carbon, efficiency_ratios, energy_integral,
                                      energy_report, energy_total, frequency_objective, optimal_frequency,
                                      resource_allocation_optimum)

UNIT = EnergyModel(kappa1=1.0, kappa2=1.0)


def test_zero_work_zero_energy():
    assert energy_total(0, 8, 3, 0, 256, UNIT) == 0.0


def test_unit_kappa_operation_count():
    assert energy_total(1, 8, 3, 100, 256, UNIT) == 204_824


def test_forest_needs_samples():
    with pytest.raises(DomainError):
        energy_total(1, 8, 3, 10, 0, UNIT)


def test_report_splits_terms():
    r = energy_report(10, 8, 3, 100, 256, UNIT)
    assert r.ae_ops == 240 and r.if_ops == 204_800
    assert r.energy_joules == 205_040


def test_trapezoid_integrals():
    assert energy_integral(np.linspace(0, 10, 11), np.full(11, 5.0)) == pytest.approx(50.0)
    assert energy_integral([0.0, 2.0], [0.0, 10.0]) == pytest.approx(10.0)
    with pytest.raises(DomainError):
        energy_integral([0.0], [1.0])
    with pytest.raises(DomainError):
        energy_integral([0.0, 0.0], [1.0, 1.0])


def test_carbon_conversion():
    assert carbon(0.0) == 0.0
    assert carbon(3.6e6, 1.7) == 1.7
    assert GAMMA_PRESETS["per_joule_1e-4"] == pytest.approx(360.0)
    with pytest.raises(DomainError):
        carbon(-1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=30, unique=True))
def test_carbon_is_exactly_linear(energies):
    assert pearson(energies, carbon(np.array(energies))) == 1.0


def test_optimal_frequency():
    assert optimal_frequency(3, 1, 1) == 1.0
    for N in (10.0, 37.0, 250.0):
        assert optimal_frequency(10 * N, 1, 1) / optimal_frequency(N, 1, 1) == pytest.approx(10 ** (1 / 3), abs=1e-9)
    with pytest.raises(DomainError):
        optimal_frequency(0, 1, 1)


def test_optimal_frequency_minimises_objective():
    f = optimal_frequency(1e9, 1e-27, 1.0)
    grid = f * np.linspace(0.5, 1.5, 1001)
    assert np.argmin(frequency_objective(grid, 1e9, 1e-27, 1.0)) == 500


def test_efficiency_ratios():
    r = efficiency_ratios(0.5, 0.9, 2.0, 0.5, 10.0)
    assert (r["psi"], r["phi"]) == (0.25, 4.0)
    assert efficiency_ratios(1, 0.94, 1, 0.22, 115)["gamma"] == pytest.approx(0.03715, abs=1e-5)
    with pytest.raises(DomainError):
        efficiency_ratios(0.0, 0.9, 1.0, 0.5, 1.0)


def test_allocation_optimum():
    r = np.linspace(0, 2, 201)
    out = resource_allocation_optimum(r, r, r ** 2, lam_p=2.0, lam_e=1.0)
    assert out["r_star"] == pytest.approx(1.0)
    flat = resource_allocation_optimum(r, np.ones_like(r), (r - 0.5) ** 2)
    assert flat["r_star"] == pytest.approx(0.5)
    with pytest.raises(DimensionError):
        resource_allocation_optimum(r, r[:-1], r)


def test_negative_coefficients_rejected():
    with pytest.raises(Exception):
        EnergyModel(kappa1=-1.0)
    assert math.isfinite(EnergyModel().gamma_carbon)
