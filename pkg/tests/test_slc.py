import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import binning_instances
from osrb.binning import BinningAssignment, BinningSpec, sample_binning
from osrb.prob import Channel, JointPmf
from osrb.slc import (
    EmptyBinError,
    SGamma2Params,
    SlcDecoder,
    exact_expected_correct,
    exact_two_decoder_error,
    union_additive_term,
    mc_error_prob,
    reference_thm2_lower_bound,
    sgamma2_membership,
    slc_decode,
    slc_posterior,
    thm2_lower_bound,
    thm2_upper_bound,
    two_decoder_error_bound,
    weakened_correct_bound,
)


def xz(probs):
    arr = np.asarray(probs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return JointPmf.from_array(arr, ["X", "Z"])


def brute_expected_correct(p_joint, t_joint, spec):
    """Loop over assignments and cells, normalising the metric inside each bin by hand."""
    names = list(spec.names) + ["Z"]
    p = p_joint.transpose(names).probs
    t = t_joint.transpose(names).probs
    cells = list(itertools.product(*[range(s) for s in p.shape]))
    per_part = [list(itertools.product(range(m), repeat=s)) for _, s, m in spec.parts]
    total, count = 0.0, 0
    for maps in itertools.product(*per_part):
        bin_of = lambda c: tuple(mp[x] for mp, x in zip(maps, c[:-1]))
        acc = 0.0
        for c in cells:
            if p[c] == 0 or t[c] == 0:
                continue
            den = sum(t[d] for d in cells if d[-1] == c[-1] and bin_of(d) == bin_of(c))
            acc += p[c] * t[c] / den
        total += acc
        count += 1
    return total / count


def metric_variants(source):
    """t = p, a uniform mismatch, and the product of the source's marginals."""
    names = source.names
    uni = JointPmf(source.axes, np.full(source.shape, 1.0 / np.prod(source.shape)))
    prod = np.ones(source.shape)
    for i, n in enumerate(names):
        axes = [j for j in range(len(names)) if j != i]
        marg = source.probs.sum(axis=tuple(axes))
        shape = [1] * len(names)
        shape[i] = marg.size
        prod = prod * marg.reshape(shape)
    return [source, uni, JointPmf(source.axes, prod / prod.sum())]


def test_posterior_examples():
    spec = BinningSpec([("X", 2, 2)])
    dec = SlcDecoder(xz([0.5, 0.5]), BinningAssignment(spec, [[0, 1]]))
    np.testing.assert_allclose(slc_posterior(dec, 0, [1]).probs, [0.0, 1.0])
    dec = SlcDecoder(xz([1 / 3] * 3), BinningAssignment(BinningSpec([("X", 3, 1)]), [[0, 0, 0]]))
    np.testing.assert_allclose(slc_posterior(dec, 0, [0]).probs, [1 / 3] * 3)
    dec = SlcDecoder(xz([0.75, 0.25]), BinningAssignment(BinningSpec([("X", 2, 1)]), [[0, 0]]))
    np.testing.assert_allclose(slc_posterior(dec, 0, [0]).probs, [0.75, 0.25])


def test_posterior_empty_bin_raises():
    dec = SlcDecoder(xz([0.5, 0.5]), BinningAssignment(BinningSpec([("X", 2, 2)]), [[0, 0]]))
    with pytest.raises(EmptyBinError):
        slc_posterior(dec, 0, [1])
    zero_metric = SlcDecoder(xz([1.0, 0.0]), BinningAssignment(BinningSpec([("X", 2, 2)]), [[0, 1]]))
    with pytest.raises(EmptyBinError):
        slc_decode(zero_metric, 0, [1], np.random.default_rng(0))


@settings(max_examples=60, deadline=None)
@given(binning_instances(zeros=False), st.integers(0, 2**32 - 1))
def test_posterior_normalised_inside_bin(inst, seed):
    source, spec = inst
    rng = np.random.default_rng(seed)
    a = sample_binning(spec, rng)
    dec = SlcDecoder(source, a)
    x = tuple(int(rng.integers(s)) for s in spec.sizes)
    b = a.bins_of(x)
    post = slc_posterior(dec, 0, b)
    assert post.probs.sum() == pytest.approx(1.0, abs=1e-12)
    for idx in itertools.product(*[range(s) for s in spec.sizes]):
        if a.bins_of(idx) != b:
            assert post.probs[idx] == 0.0


def test_decode_examples():
    spec = BinningSpec([("X", 2, 2)])
    dec = SlcDecoder(xz([0.5, 0.5]), BinningAssignment(spec, [[0, 1]]))
    rng = np.random.default_rng(0)
    assert all(slc_decode(dec, 0, [1], rng) == (1,) for _ in range(50))
    dec = SlcDecoder(xz([0.75, 0.25]), BinningAssignment(BinningSpec([("X", 2, 1)]), [[0, 0]]))
    draws = np.array([slc_decode(dec, 0, [0], rng)[0] for _ in range(10**5)])
    freq = np.mean(draws == 0)
    assert abs(freq - 0.75) < 3 * math.sqrt(0.75 * 0.25 / draws.size)
    assert all(slc_decode(dec, 0, [0], deterministic=True) == (0,) for _ in range(10))
    with pytest.raises(ValueError):
        slc_decode(dec, 0, [0])


def test_lower_bound_examples():
    src = xz([0.5, 0.5])
    assert thm2_lower_bound(src, src, BinningSpec([("X", 2, 2)])) == pytest.approx(0.5, abs=1e-15)
    huge = BinningSpec([("X", 2, 10**9)])
    assert thm2_lower_bound(src, src, huge) == pytest.approx(1.0, abs=1e-8)


def test_lower_bound_two_parts_against_reference():
    joint = JointPmf.from_array(np.array([[[0.3], [0.1]], [[0.15], [0.45]]]), ["X1", "X2", "Z"])
    spec = BinningSpec([("X1", 2, 2), ("X2", 2, 3)])
    t = metric_variants(joint)[1]
    assert thm2_lower_bound(joint, t, spec) == pytest.approx(reference_thm2_lower_bound(joint, t, spec), abs=1e-12)
    # hand evaluation with uniform t: every conditional information is 1 bit
    assert thm2_lower_bound(joint, t, spec) == pytest.approx(1 / (1 + 2 / 2 + 2 / 3 + 4 / 6), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(binning_instances(zeros=False))
def test_lower_bound_matches_reference(inst):
    source, spec = inst
    for t in metric_variants(source):
        assert thm2_lower_bound(source, t, spec) == pytest.approx(reference_thm2_lower_bound(source, t, spec), abs=1e-12)


def test_sgamma2_examples():
    det = xz([1.0, 0.0])
    params = SGamma2Params(det, BinningSpec([("X", 2, 2)]), 0.5)
    assert sgamma2_membership(params, [0])
    # h = +inf at the zero-metric point
    assert not sgamma2_membership(params, [1])
    big = SGamma2Params(xz([0.5, 0.5]), BinningSpec([("X", 2, 2)]), 1.5)
    assert not any(sgamma2_membership(big, [x]) for x in range(2))
    with pytest.raises(ValueError):
        SGamma2Params(det, BinningSpec([("X", 2, 2)]), -1.0)
    with pytest.raises(ValueError):
        SGamma2Params(det, BinningSpec([("X", 2, 2)]), 1.0, conditioning="other")


def test_upper_bound_examples():
    src = xz([0.5, 0.5])
    p = SGamma2Params(src, BinningSpec([("X", 2, 2)]), 1.0)
    # 1 - 1 > 1 fails everywhere, so the whole mass is outside
    assert thm2_upper_bound(src, p) == pytest.approx(1.0 + 0.5)
    far = SGamma2Params(src, BinningSpec([("X", 2, 2**40)]), 30.0)
    assert thm2_upper_bound(src, far) == pytest.approx(2**-30, abs=1e-15)


def test_exact_correct_examples():
    src = xz([0.5, 0.5])
    assert exact_expected_correct(src, src, BinningSpec([("X", 2, 2)])) == pytest.approx(0.75, abs=1e-15)
    assert brute_expected_correct(src, src, BinningSpec([("X", 2, 2)])) == pytest.approx(0.75, abs=1e-15)
    spec = BinningSpec([("X", 3, 3)])
    dec = SlcDecoder(xz([0.2, 0.3, 0.5]), BinningAssignment(spec, [[2, 0, 1]]))
    for x in range(3):
        assert slc_decode(dec, 0, [dec.assignment.maps[0][x]], deterministic=True) == (x,)


@settings(max_examples=30, deadline=None)
@given(binning_instances(max_size=2, max_bins=2))
def test_exact_correct_matches_brute_force(inst):
    source, spec = inst
    for t in metric_variants(source):
        assert exact_expected_correct(source, t, spec) == pytest.approx(brute_expected_correct(source, t, spec), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(binning_instances(zeros=False), st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0]))
def test_thm2_sandwich_and_weakening(inst, gamma):
    source, spec = inst
    for t in metric_variants(source):
        exact = exact_expected_correct(source, t, spec)
        lower = thm2_lower_bound(source, t, spec)
        assert lower <= exact + 1e-12
        params = SGamma2Params(t, spec, gamma)
        assert 1 - exact <= thm2_upper_bound(source, params) + 1e-12
        assert weakened_correct_bound(source, params) <= lower + 1e-12


@settings(max_examples=40, deadline=None)
@given(binning_instances(zeros=False), st.integers(0, 1), st.integers(1, 4))
def test_lower_bound_monotone_in_bins(inst, part, extra):
    source, spec = inst
    part = min(part, len(spec.parts) - 1)
    bumped = [list(p) for p in spec.parts]
    bumped[part][2] += extra
    bigger = BinningSpec([tuple(p) for p in bumped])
    assert thm2_lower_bound(source, source, spec) <= thm2_lower_bound(source, source, bigger) + 1e-15


def test_mc_error_examples():
    rng = np.random.default_rng(4)
    src = xz([0.2, 0.3, 0.5])
    assert mc_error_prob(src, src, BinningSpec([("X", 3, 1)]), 200, rng)[0] > 0
    one = xz([1.0])
    assert mc_error_prob(one, one, BinningSpec([("X", 1, 1)]), 200, rng) == (0.0, 0.0)
    half = xz([0.5, 0.5])
    est, hw = mc_error_prob(half, half, BinningSpec([("X", 2, 2)]), 10**5, rng)
    assert abs(est - 0.25) <= hw
    with pytest.raises(ValueError):
        mc_error_prob(half, half, BinningSpec([("X", 2, 2)]), 1, rng)


@settings(max_examples=15, deadline=None)
@given(binning_instances(zeros=False), st.sampled_from([0.5, 1.0, 2.0]), st.integers(0, 2**32 - 1))
def test_mc_error_below_upper_bound(inst, gamma, seed):
    source, spec = inst
    est, hw = mc_error_prob(source, source, spec, 4000, np.random.default_rng(seed))
    assert est <= thm2_upper_bound(source, SGamma2Params(source, spec, gamma)) + hw


def test_two_decoder_bound_dominates_exact():
    q = JointPmf.from_array(np.full((2, 2), 0.25), ["U1", "U2"])
    ch = Channel.product(Channel.bsc(0.1, "U1", "Y1"), Channel.bsc(0.2, "U2", "Y2"), input="X")
    rows = ch.rows.reshape(2, 2, 2, 2)
    joint = JointPmf.from_array(q.probs[:, :, None, None] * rows, ["U1", "U2", "Y1", "Y2"])
    metrics = (
        JointPmf.from_array(joint.probs.sum(axis=(1, 3)), ["U1", "Y1"]),
        JointPmf.from_array(joint.probs.sum(axis=(0, 2)), ["U2", "Y2"]),
    )
    exact = exact_two_decoder_error(joint, metrics, (2, 2))
    for g in (0.5, 1.0, 2.0):
        assert exact <= two_decoder_error_bound(joint, metrics, (2, 2), g) + 1e-12
        assert exact <= two_decoder_error_bound(joint, metrics, (2, 2), g, constant=3.0) + 1e-12
    # the two receivers decode independently: 1 - (1 - e1)(1 - e2)
    e = [1 - exact_expected_correct(m, m, BinningSpec([(m.names[0], 2, 2)])) for m in metrics]
    assert exact == pytest.approx(1 - (1 - e[0]) * (1 - e[1]), abs=1e-12)
    assert union_additive_term(1.0) == 2.0
    assert union_additive_term(1.0, 3.0) == 1.5
