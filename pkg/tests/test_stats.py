import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats as sps

from edgeguard.errors import DegenerateInputError, SampleSizeError
from edgeguard.stats import (betainc, cohens_d, cohens_d_from_moments, describe, f_sf, ks_statistic,
                             one_way_anova, pearson, q_critical, separability_delta_i, t_sf_two_sided,
                             tukey_hsd, welch_t)


def test_anova_worked_example():
    r = one_way_anova([[1, 2, 3], [4, 5, 6]])
    assert (r.ss_between, r.ss_within, r.df_between, r.df_within) == (13.5, 4.0, 1, 4)
    assert r.F == pytest.approx(13.5, abs=1e-12)
    assert r.eta_squared == pytest.approx(13.5 / 17.5, abs=1e-12)
    assert r.p == pytest.approx(sps.f_oneway([1, 2, 3], [4, 5, 6]).pvalue, rel=1e-9)


def test_anova_identical_groups():
    assert one_way_anova([[1, 2, 3], [1, 2, 3]]).F == 0.0


def test_anova_input_errors():
    with pytest.raises(SampleSizeError):
        one_way_anova([[1, 2], [3]])
    with pytest.raises(DegenerateInputError):
        one_way_anova([[1, 1], [1, 1]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_anova_matches_reference(seed):
    rng = np.random.default_rng(seed)
    groups = [rng.normal(loc=rng.normal(), size=int(rng.integers(2, 12))) for _ in range(int(rng.integers(2, 5)))]
    ref = sps.f_oneway(*groups)
    r = one_way_anova(groups)
    assert r.F == pytest.approx(ref.statistic, rel=1e-9)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 20), st.floats(0.1, 20), st.floats(0.0, 1.0))
def test_incomplete_beta(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


def test_distribution_tails():
    assert f_sf(3.0, 2, 10) == pytest.approx(sps.f.sf(3.0, 2, 10), rel=1e-10)
    assert t_sf_two_sided(-2.1, 7.5) == pytest.approx(2 * sps.t.sf(2.1, 7.5), rel=1e-10)


def test_welch_worked_example():
    r = welch_t([1, 2, 3, 4], [2, 3, 4, 5])
    assert r.t == pytest.approx(-1.0954, abs=1e-3)
    assert r.df == pytest.approx(6.0)
    ref = sps.ttest_ind([1, 2, 3, 4], [2, 3, 4, 5], equal_var=False)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_welch_identical_samples():
    assert welch_t([1, 2, 3], [1, 2, 3]).t == 0.0


def test_pearson_cases():
    x = np.arange(10.0)
    assert pearson(x, 3 * x + 2) == 1.0
    assert pearson(x, -x) == -1.0
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DegenerateInputError):
        pearson([1, 1, 1], [1, 2, 3])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=40), st.floats(1e-3, 1e3))
def test_proportional_series_correlate_exactly(xs, k):
    if len(set(xs)) < 2:
        return
    ys = [k * v for v in xs]
    if len(set(ys)) < 2:
        return
    assert pearson(xs, ys) == 1.0


def test_ks_cases():
    assert ks_statistic([1, 2, 3], [1, 2, 3]) == 0.0
    assert ks_statistic([1, 2], [5, 6]) == 1.0
    assert ks_statistic([1, 2], [1.5, 2.5]) == 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_ks_matches_reference(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=int(rng.integers(1, 30))), rng.normal(0.3, size=int(rng.integers(1, 30)))
    assert ks_statistic(a, b) == pytest.approx(sps.ks_2samp(a, b).statistic, abs=1e-12)


def test_cohens_d():
    assert cohens_d_from_moments(0.2, 0.14, 0.8, 0.14) == pytest.approx(4.2857, abs=1e-3)
    assert cohens_d([1, 2, 3], [1, 2, 3]) == 0.0
    with pytest.raises(DegenerateInputError):
        cohens_d_from_moments(0, 0, 1, 0)


def test_separability_of_point_masses():
    a, b = [0.0] * 10, [1.0] * 10
    w = 1.0 / 32
    assert separability_delta_i(a, b, 32) == pytest.approx(2 / w)
    assert separability_delta_i([0.0, 1.0], [0.0, 1.0]) == 0.0
    with pytest.raises(DegenerateInputError):
        separability_delta_i([1.0], [1.0])


def test_studentized_range_table():
    assert q_critical(3, 22) == pytest.approx(sps.studentized_range.ppf(0.95, 3, 22), abs=2e-3)
    assert q_critical(2, math.inf) == pytest.approx(2.772, abs=1e-3)


def test_tukey_groupings(rng):
    far = tukey_hsd([[0, 0.01, -0.01], [100, 100.01, 99.99]], names=["a", "b"])
    assert far.letters == {"a": "A", "b": "B"}
    same = tukey_hsd([[1, 2, 3], [1, 2, 3]], names=["a", "b"])
    assert same.letters == {"a": "A", "b": "A"}
    three = tukey_hsd([rng.normal(0, 1, 12), rng.normal(0.1, 1, 12), rng.normal(100, 1, 12)], names="xyz")
    assert three.subsets() == {"A": ["x", "y"], "B": ["z"]}


def test_describe():
    d = describe([1.0, 2.0, 3.0])
    assert d["n"] == 3 and d["mean"] == 2.0 and d["sd"] == 1.0
