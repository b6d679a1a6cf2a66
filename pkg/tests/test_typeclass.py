import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osrb.prob import Pmf
from osrb.typeclass import (
    NType,
    TypeClassDist,
    enumerate_type_class,
    nearest_ntype,
    sample_from_type,
    sequence_type,
    type_class_log_size,
    type_constant_L,
    type_entropy,
    type_log_mass,
)

from conftest import pmfs


def test_ntype_validation():
    with pytest.raises(ValueError):
        NType(3, (1, 1))
    with pytest.raises(ValueError):
        NType(2, (3, -1))


def test_ntype_json_round_trip():
    t = NType(5, (2, 3))
    assert NType.from_json(t.to_json()) == t
    assert t.to_json() == {"n": 5, "counts": [2, 3]}


@pytest.mark.parametrize(
    "q, n, counts",
    [((0.5, 0.5), 4, (2, 2)), ((1 / 3, 2 / 3), 3, (1, 2)), ((0.4, 0.6), 5, (2, 3))],
)
def test_nearest_ntype_examples(q, n, counts):
    assert nearest_ntype(Pmf(q), n).counts == counts


def test_nearest_ntype_matches_exhaustive_best():
    q = np.array([0.4, 0.6])
    best = min(((k, 5 - k) for k in range(6)), key=lambda c: np.abs(np.array(c) / 5 - q).max())
    assert nearest_ntype(q, 5).counts == best


def test_nearest_ntype_tie_goes_to_lower_index():
    assert nearest_ntype([0.5, 0.5], 1).counts == (1, 0)


@settings(max_examples=300, deadline=None)
@given(pmfs(max_size=6), st.integers(1, 1000))
def test_nearest_ntype_sup_distance(q, n):
    t = nearest_ntype(q, n)
    assert sum(t.counts) == n
    assert np.abs(t.probs - q.probs).max() <= 1.0 / n + 1e-15


def test_type_class_log_size_examples():
    assert type_class_log_size(NType(7, (7, 0, 0))) == 0.0
    assert type_class_log_size(NType(4, (2, 2))) == pytest.approx(math.log2(6), abs=1e-12)
    assert type_class_log_size(NType(5, (2, 3))) == pytest.approx(math.log2(10), abs=1e-12)


def test_type_class_log_size_large_n_accuracy():
    t = NType(10**6, (300000, 700000))
    exact = (math.lgamma(10**6 + 1) - math.lgamma(300001) - math.lgamma(700001)) / math.log(2)
    assert type_class_log_size(t) == pytest.approx(exact, abs=1e-8)


def test_type_log_mass_examples():
    assert type_log_mass(NType(3, (0, 3))) == 0.0
    assert type_log_mass(NType(4, (2, 2))) == pytest.approx(2.58496, abs=1e-5)


def test_type_log_mass_matches_sampled_frequency():
    t = NType(4, (2, 2))
    rng = np.random.default_rng(11)
    draws = sample_from_type(t, rng, 10**6)
    hits = np.all(draws == np.array([0, 1, 1, 0]), axis=1).mean()
    p = 2.0 ** -type_log_mass(t)
    sigma = math.sqrt(p * (1 - p) / 10**6)
    assert abs(hits - p) < 3 * sigma


def test_type_class_dist_log_mass():
    d = TypeClassDist(NType(4, (2, 2)))
    assert d.log_mass([0, 1, 0, 1]) == pytest.approx(math.log2(6))
    assert d.log_mass([0, 0, 0, 1]) == math.inf
    assert d.log_mass([0, 1]) == math.inf


def test_sample_degenerate_type():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(sample_from_type(NType(6, (6, 0)), rng), np.zeros(6))


def test_sample_two_orderings_uniform():
    rng = np.random.default_rng(5)
    draws = sample_from_type(NType(2, (1, 1)), rng, 10**5)
    freq = (draws[:, 0] == 0).mean()
    assert abs(freq - 0.5) < 3 * math.sqrt(0.25 / 10**5)


def test_sample_uniform_over_class_chi_square():
    from scipy import stats

    t = NType(5, (2, 2, 1))
    rng = np.random.default_rng(7)
    draws = sample_from_type(t, rng, 60000)
    counts = Counter(map(tuple, draws))
    assert len(counts) == 30
    chi2 = stats.chisquare(list(counts.values()))
    assert chi2.pvalue > 1e-3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=4).filter(lambda c: sum(c) > 0), st.integers(0, 2**32))
def test_sample_has_exact_type(counts, seed):
    t = NType(sum(counts), tuple(counts))
    rng = np.random.default_rng(seed)
    for seq in sample_from_type(t, rng, 20):
        assert sequence_type(seq, len(counts)) == t


def test_type_constant_L():
    assert type_constant_L(2) == 1
    assert type_constant_L(1) == 0
    with pytest.raises(ValueError):
        type_constant_L(0)


def test_type_size_bounds_binary_exhaustive():
    L = type_constant_L(2)
    for n in range(2, 201):
        for k in range(n + 1):
            t = NType(n, (k, n - k))
            size = type_class_log_size(t)
            nh = n * type_entropy(t)
            assert nh - L * math.log2(n) - 1e-9 <= size <= nh + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=2, max_size=6).filter(lambda c: sum(c) >= 2))
def test_type_size_bounds_sampled(counts):
    t = NType(sum(counts), tuple(counts))
    L = type_constant_L(len(counts))
    size = type_class_log_size(t)
    nh = t.n * type_entropy(t)
    assert nh - L * math.log2(t.n) - 1e-9 <= size <= nh + 1e-9


def test_type_sizes_match_direct_counts():
    for n in range(1, 21):
        for k in range(n + 1):
            assert 2 ** type_class_log_size(NType(n, (k, n - k))) == pytest.approx(math.comb(n, k), rel=1e-10)


def test_enumerate_type_class_is_exactly_the_class():
    t = NType(6, (2, 3, 1))
    listed = enumerate_type_class(t)
    brute = [s for s in itertools.product(range(3), repeat=6) if sequence_type(np.array(s), 3) == t]
    assert [tuple(r) for r in listed] == sorted(brute)


def test_enumerate_type_class_guard():
    with pytest.raises(MemoryError):
        enumerate_type_class(NType(40, (20, 20)))
