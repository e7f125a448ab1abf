import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from edgeguard.errors import DegenerateInputError, DimensionError, ModelFormatError
from edgeguard.preprocess import (NormalizationMode, NormalizationParams, empirical_lipschitz, fit_normalizer,
                                  format_params, parse_params, transform)


def _params(mu, sigma, lo, hi, med, iqr, delta=0.05, eta=0.05):
    a = lambda v: np.array([float(v)])  # noqa: E731
    return NormalizationParams(a(mu), a(sigma), a(lo), a(hi), a(med), a(iqr), delta=delta, eta=eta)


def test_single_row_has_zero_spread():
    p = fit_normalizer(np.array([[1.0, 2.0, 3.0]]))
    assert np.all(p.sigma == 0) and np.all(p.iqr == 0)


def test_column_statistics():
    p = fit_normalizer(np.array([[1.0], [2.0], [3.0]]))
    assert (p.mu[0], p.median[0], p.min[0], p.max[0]) == (2.0, 2.0, 1.0, 3.0)


def test_population_sigma():
    p = fit_normalizer(np.array([[0.0], [0.0], [0.0], [10.0]]))
    assert p.mu[0] == 2.5
    assert p.sigma[0] == pytest.approx(np.sqrt(18.75), abs=1e-12)


def test_empty_matrix_rejected():
    with pytest.raises(DimensionError):
        fit_normalizer(np.zeros((0, 3)))


def test_zscore_of_mean_is_zero(rng):
    X = rng.normal(size=(50, 4))
    p = fit_normalizer(X)
    assert np.allclose(transform(p.mu, p, "zscore"), 0.0)


def test_composite_without_extra_terms_is_minmax():
    p = _params(2, 1, 0, 4, 2, 2, delta=0.0, eta=0.0)
    assert transform(np.array([[0.0]]), p)[0, 0] == 0.0
    assert transform(np.array([[4.0]]), p)[0, 0] == 1.0


def test_composite_substitution():
    p = _params(2, 1, 0, 4, 2, 2, delta=0.1, eta=0.1)
    assert transform(np.array([2.0]), p)[0] == pytest.approx(0.5, abs=1e-15)


def test_composite_matches_closed_form(rng):
    X = rng.gamma(2.0, 3.0, size=(200, 3))
    p = fit_normalizer(X, delta=0.07, eta=0.03)
    expected = ((X - p.min) / (p.max - p.min) + 0.07 * np.log1p(np.abs(X - p.mu) / (p.sigma + p.eps))
                + 0.03 * (X - p.median) / p.iqr)
    assert np.allclose(transform(X, p), expected, rtol=1e-12, atol=1e-12)


def test_constant_column_maps_to_zero_not_nan():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    p = fit_normalizer(X)
    for mode in NormalizationMode:
        out = transform(X, p, mode)
        assert np.all(np.isfinite(out))
        if mode not in (NormalizationMode.RAW,):
            assert np.all(out[:, 0] == 0.0)


def test_column_mismatch_rejected(rng):
    p = fit_normalizer(rng.normal(size=(5, 3)))
    with pytest.raises(DimensionError):
        transform(np.zeros((2, 4)), p)


def test_all_modes_listed():
    assert [m.value for m in NormalizationMode] == [
        "raw", "zscore", "minmax", "robust", "minmax_plus_log", "full_composite"]


def test_lipschitz_zscore_bounded_by_inverse_sigma(rng):
    X = rng.normal(size=(300, 3)) * 2.0
    X = (X - X.mean(0)) / X.std(0) * 2.0  # exact sigma 2
    p = fit_normalizer(X, eps=1e-12)
    out = empirical_lipschitz(p, X, pair_count=500)
    assert out["estimate"] <= 0.5 + 1e-9
    assert out["analytic_zscore"] == pytest.approx(0.5)


def test_lipschitz_raw_is_exactly_one(rng):
    X = rng.normal(size=(50, 3))
    assert empirical_lipschitz(fit_normalizer(X), X, mode="raw")["estimate"] == pytest.approx(1.0, abs=1e-12)


def test_lipschitz_skips_duplicate_pairs():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0]])
    out = empirical_lipschitz(fit_normalizer(X), X, pair_count=200)
    assert np.isfinite(out["estimate"]) and out["pairs_used"] < 200


def test_lipschitz_identical_rows_rejected():
    X = np.ones((5, 2))
    with pytest.raises(DegenerateInputError):
        empirical_lipschitz(fit_normalizer(X), X)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_params_text_round_trip(X):
    p = fit_normalizer(X, delta=0.1, eta=0.2)
    q = parse_params(format_params(p))
    for mode in NormalizationMode:
        assert np.array_equal(transform(X, p, mode), transform(X, q, mode))


def test_bad_params_file():
    with pytest.raises(ModelFormatError):
        parse_params("mu = 1\n")
