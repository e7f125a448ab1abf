import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeguard import iforest
from edgeguard.errors import DomainError, ModelFormatError, ParameterError
from oracles import exact_harmonic


def _tree(feature, threshold, left, right, size, depth):
    return iforest.ITree(*(np.array(v) for v in (feature, threshold, left, right, size, depth)))


def _model(trees, n=2, k=1):
    return iforest.IsolationForestModel(trees, n, 8, iforest.c_of_n(n), k)


def _chain(sizes, leaf_left=True):
    """Tree whose left spine has the given node sizes; right children are leaves."""
    k = len(sizes)
    feature, threshold, left, right, size, depth = [], [], [], [], [], []
    # pre-order: spine node i, then its left subtree, then its right leaf
    def add(level):
        node = len(feature)
        feature.append(0 if level < k - 1 else -1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(sizes[level])
        depth.append(level)
        if level < k - 1:
            left[node] = add(level + 1)
            r = len(feature)
            feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
            size.append(sizes[level] - sizes[level + 1]); depth.append(level + 1)
            right[node] = r
        return node
    add(0)
    return _tree(feature, threshold, left, right, size, depth)


def test_c_of_two_is_one():
    assert iforest.c_of_n(2) == 1.0
    assert iforest.c_of_n_exact(2) == 1.0


def test_c_of_one_is_zero():
    assert iforest.c_of_n(1) == 0.0


def test_c_of_256():
    assert iforest.c_of_n(256) == pytest.approx(10.2447, abs=1e-3)


@pytest.mark.parametrize("n", [2, 3, 10, 256, 1000])
def test_exact_form_matches_rational_sum(n):
    expected = float(2 * exact_harmonic(n - 1)) - 2.0 * (n - 1) / n
    assert iforest.c_of_n_exact(n) == pytest.approx(expected, rel=1e-14)


def test_approximation_converges_to_exact():
    assert abs(iforest.c_of_n(10_000) - iforest.c_of_n_exact(10_000)) < 1e-3


def test_c_rejects_non_positive():
    with pytest.raises(DomainError):
        iforest.c_of_n(0)


def test_classic_score_at_c_n_is_half():
    for n in (2, 64, 256):
        c = iforest.c_of_n(n)
        assert iforest.classic_from_path(c, c) == 0.5
    assert iforest.classic_from_path(0.0, 5.0) == 1.0


def test_single_leaf_at_depth_one():
    t = _tree([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [2, 1, 1], [0, 1, 1])
    m = _model([t])
    assert iforest.avg_path_length(np.array([0.0]), m) == 1.0


def test_leaf_adds_c_of_its_size():
    h = iforest.path_lengths(np.array([[-1.0]]), _model([_chain([4, 3, 2])]))[0, 0]
    assert h == 2 + iforest.c_of_n(2)


def test_average_over_trees():
    m = _model([_chain([4, 3, 1]), _chain([5, 4, 3, 2, 1])])
    assert iforest.avg_path_length(np.array([-1.0]), m) == 3.0


def test_log_population_score():
    root_leaf = _tree([-1], [0.0], [-1], [-1], [5], [0])
    assert iforest.score_leafmass(np.array([0.0]), _model([root_leaf], n=8)) == 1.0
    t = _chain([8, 4, 2, 1])
    got = iforest.score_leafmass(np.array([-1.0]), _model([t], n=8))
    want = math.exp(-(math.log(5 / 4) + math.log(3 / 2) + math.log(2)) / iforest.c_of_n(8))
    assert got == pytest.approx(want, rel=1e-14)


def test_two_point_trees(rng):
    Z = rng.normal(size=(2, 3))
    m = iforest.fit_forest(Z, m=20, n=2, seed=4)
    assert all(t.n_nodes == 3 for t in m.trees)
    same = iforest.fit_forest(np.ones((2, 3)), m=5, n=2)
    assert all(t.n_nodes == 1 for t in same.trees)


def test_one_tree_model(rng):
    assert len(iforest.fit_forest(rng.normal(size=(30, 2)), m=1, n=16).trees) == 1


def test_bad_sizes_rejected(rng):
    with pytest.raises(ParameterError):
        iforest.fit_forest(rng.normal(size=(10, 2)), m=3, n=11)
    with pytest.raises(ParameterError):
        iforest.fit_forest(rng.normal(size=(10, 2)), m=0, n=4)


def test_same_seed_same_forest(rng):
    Z = rng.normal(size=(300, 4))
    a = iforest.format_forest(iforest.fit_forest(Z, m=10, n=64, seed=3))
    b = iforest.format_forest(iforest.fit_forest(Z, m=10, n=64, seed=3))
    assert a == b


def test_outlier_scores_above_inliers(rng):
    Z = np.vstack([rng.normal(scale=0.1, size=(200, 2)), [[5.0, 5.0]]])
    m = iforest.fit_forest(Z, m=100, n=64, seed=0)
    s = iforest.score_classic(Z, m)
    assert s[-1] > np.quantile(s[:-1], 0.95)


def test_path_lengths_within_cap(rng):
    Z = rng.normal(size=(500, 3))
    m = iforest.fit_forest(Z, m=10, n=128, seed=1)
    h = iforest.path_lengths(rng.normal(size=(50, 3)) * 3, m)
    assert np.all(h >= 0) and np.all(h <= m.max_depth + m.c_n)
    assert all(iforest.audit_sizes(t) for t in m.trees)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 64))
def test_serialisation_preserves_scores(seed, n):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n + 5, 2))
    m = iforest.fit_forest(Z, m=4, n=n, seed=seed)
    back = iforest.parse_forest(iforest.format_forest(m))
    probe = rng.normal(size=(20, 2)) * 2
    assert np.array_equal(iforest.score_classic(probe, m), iforest.score_classic(probe, back))
    assert np.array_equal(iforest.score_leafmass(probe, m), iforest.score_leafmass(probe, back))


def test_malformed_forest():
    with pytest.raises(ModelFormatError):
        iforest.parse_forest("junk")
