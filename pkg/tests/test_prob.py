import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osrb.prob import (
    Alphabet,
    Channel,
    CovMatrix2,
    JointPmf,
    Pmf,
    PmfError,
    bc_covariance,
    channel_dispersion,
    condition,
    conditional_information,
    entropy,
    iid_extend,
    iid_mass,
    information_density,
    marginalize,
    mutual_information,
    total_variation,
    wiretap_variances,
)

from conftest import channels, joint_pmfs, pmfs

BSC25_DISPERSION = 0.75 * 0.25 * math.log2(3) ** 2


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# -- construction and JSON -----------------------------------------------------


def test_pmf_rejects_bad_normalization():
    with pytest.raises(PmfError, match="sum to"):
        Pmf([0.5, 0.48])


def test_pmf_reports_negative_entry_index():
    with pytest.raises(PmfError) as exc:
        JointPmf.from_array([[0.5, 0.6], [-0.1, 0.0]])
    assert exc.value.index == (1, 0)


def test_duplicate_axis_labels_rejected():
    with pytest.raises(ValueError, match="unique"):
        JointPmf([Alphabet("X", 2), Alphabet("X", 2)], np.full((2, 2), 0.25))


def test_alphabet_size_positive():
    with pytest.raises(ValueError):
        Alphabet("X", 0)


def test_joint_json_round_trip(bsc_joint):
    back = JointPmf.from_json(bsc_joint.to_json())
    assert back.names == bsc_joint.names
    np.testing.assert_array_equal(back.probs, bsc_joint.probs)


def test_joint_json_reports_flat_index():
    with pytest.raises(PmfError) as exc:
        JointPmf.from_json({"axis_sizes": [3], "probs": [0.5, float("nan"), 0.5]})
    assert exc.value.index == 1


def test_channel_json_round_trip():
    ch = Channel.broadcast(Channel.bsc(0.1), Channel.bsc(0.3))
    back = Channel.from_json(ch.to_json())
    np.testing.assert_allclose(back.rows, ch.rows)


def test_channel_json_reports_row():
    obj = {"input_size": 2, "output_sizes": [2], "rows": [[0.5, 0.5], [0.9, 0.2]]}
    with pytest.raises(PmfError, match="row 1"):
        Channel.from_json(obj)


def test_tables_are_read_only(bsc_joint):
    with pytest.raises(ValueError):
        bsc_joint.probs[0, 0] = 1.0


# -- marginalize / condition ---------------------------------------------------


def test_marginalize_identity(bsc_joint):
    np.testing.assert_array_equal(marginalize(bsc_joint, ["X", "Y"]).probs, bsc_joint.probs)


def test_marginalize_uniform_square():
    u = JointPmf.from_array(np.full((2, 2), 0.25), ["X", "Y"])
    np.testing.assert_allclose(marginalize(u, ["X"]).probs, [0.5, 0.5])


def test_marginalize_hand_sum():
    p = JointPmf.from_array([[0.3, 0.2], [0.1, 0.4]], ["X", "Y"])
    np.testing.assert_allclose(marginalize(p, ["X"]).probs, [0.5, 0.5])


def test_marginalize_unknown_axis(bsc_joint):
    with pytest.raises(KeyError):
        marginalize(bsc_joint, ["W"])


def test_condition_independent_is_marginal():
    p = JointPmf.from_array(np.outer([0.2, 0.8], [0.6, 0.4]), ["X", "Y"])
    np.testing.assert_allclose(condition(p, "X", {"Y": 1}).probs, [0.2, 0.8])


def test_condition_bsc_bayes(bsc_joint):
    np.testing.assert_allclose(condition(bsc_joint, "X", {"Y": 0}).probs, [0.75, 0.25])


def test_condition_deterministic_channel_point_mass():
    joint = Channel.deterministic([2, 0, 1], 3).joint(Pmf([0.2, 0.3, 0.5]))
    np.testing.assert_allclose(condition(joint, "X", {"Y": 0}).probs, [0.0, 1.0, 0.0])


def test_condition_on_zero_mass_point():
    joint = Channel.deterministic([0, 0], 2).joint(Pmf.uniform(2))
    with pytest.raises(ZeroDivisionError):
        condition(joint, "X", {"Y": 1})


# -- iid extension ---------------------------------------------------------------


def test_iid_extend_n1_identity(bsc_joint):
    np.testing.assert_array_equal(iid_extend(bsc_joint, 1).probs, bsc_joint.probs)


def test_iid_extend_bernoulli_half():
    ext = iid_extend(Pmf.uniform(2), 3)
    np.testing.assert_allclose(ext.probs, np.full((2, 2, 2), 1 / 8))


def test_iid_extend_bsc_hand_product(bsc_joint):
    ext = iid_extend(bsc_joint, 2)
    assert ext.names == ("X_1", "Y_1", "X_2", "Y_2")
    assert ext((0, 0, 0, 1)) == pytest.approx(0.375 * 0.125, abs=1e-15)


def test_iid_extend_guard():
    with pytest.raises(MemoryError):
        iid_extend(Pmf.uniform(2), 25)


@settings(max_examples=50, deadline=None)
@given(joint_pmfs(max_axes=2, max_size=3), st.integers(1, 3), st.data())
def test_iid_extend_matches_product_of_letters(p, n, data):
    seq = [tuple(data.draw(st.integers(0, s - 1)) for s in p.shape) for _ in range(n)]
    ext = iid_extend(p, n)
    flat = tuple(c for pt in seq for c in pt)
    assert ext(flat) == pytest.approx(iid_mass(p, seq), abs=1e-12)
    assert iid_mass(p, seq) == pytest.approx(math.prod(p(pt) for pt in seq), abs=1e-12)


# -- information quantities ------------------------------------------------------


def test_conditional_information_certain():
    joint = Channel.noiseless(2).joint(Pmf.uniform(2))
    assert conditional_information(joint, {"X": 1}, {"Y": 1}) == 0.0


def test_conditional_information_bsc(bsc_joint):
    assert conditional_information(bsc_joint, {"X": 0}, {"Y": 0}) == pytest.approx(math.log2(1 / 0.75), abs=1e-12)
    assert conditional_information(bsc_joint, {"X": 0}, {"Y": 0}) == pytest.approx(0.41504, abs=1e-5)


def test_conditional_information_impossible_is_inf():
    joint = Channel.noiseless(2).joint(Pmf.uniform(2))
    assert conditional_information(joint, {"X": 0}, {"Y": 1}) == math.inf


def test_conditional_information_zero_condition():
    joint = Channel.deterministic([0, 0], 2).joint(Pmf.uniform(2))
    with pytest.raises(ZeroDivisionError):
        conditional_information(joint, {"X": 0}, {"Y": 1})


def test_information_density_independent_zero():
    p = JointPmf.from_array(np.outer([0.3, 0.7], [0.1, 0.9]), ["X", "Y"])
    for x in range(2):
        for y in range(2):
            assert information_density(p, {"X": x}, {"Y": y}) == pytest.approx(0.0, abs=1e-12)


def test_information_density_bsc(bsc_joint):
    assert information_density(bsc_joint, {"X": 1}, {"Y": 1}) == pytest.approx(math.log2(1.5), abs=1e-12)
    assert information_density(bsc_joint, {"X": 0}, {"Y": 1}) == pytest.approx(-1.0, abs=1e-12)


def test_information_density_zero_joint_is_minus_inf():
    joint = Channel.noiseless(2).joint(Pmf.uniform(2))
    assert information_density(joint, {"X": 0}, {"Y": 1}) == -math.inf


def test_entropy_examples(bsc_joint):
    assert entropy(Pmf.uniform(5), ["X"]) == pytest.approx(math.log2(5))
    assert entropy(bsc_joint, ["X"], ["Y"]) == pytest.approx(h2(0.25), abs=1e-12)
    assert entropy(bsc_joint, ["X"], ["Y"]) == pytest.approx(0.81128, abs=1e-5)


def test_entropy_given_a_copy_is_zero(bsc_joint):
    # H(X|X) = 0 is expressed by conditioning on a noiseless copy of the axis
    joint = Channel.noiseless(2).joint(Pmf([0.3, 0.7]))
    assert entropy(joint, ["X"], ["Y"]) == 0.0
    with pytest.raises(ValueError):
        entropy(bsc_joint, ["X"], ["X"])


def test_total_variation_examples():
    a, b = Pmf.point_mass(2, 0), Pmf.point_mass(2, 1)
    assert total_variation(a, a) == 0.0
    assert total_variation(a, b) == 1.0
    assert total_variation(Pmf([1.0, 0.0]), Pmf.uniform(2)) == pytest.approx(0.5)


def test_total_variation_axis_mismatch():
    with pytest.raises(ValueError):
        total_variation(Pmf.uniform(2, "X"), Pmf.uniform(2, "Y"))


def _brute_dispersion(joint, x="X", y="Y"):
    """E_X Var[ı(X;Y)|X] by explicit loops over the table."""
    px = marginalize(joint, [x]).probs
    total = 0.0
    for a in range(px.size):
        if px[a] == 0:
            continue
        vals, ws = [], []
        for b in range(joint.alphabet(y).size):
            pab = joint({x: a, y: b})
            if pab > 0:
                vals.append(information_density(joint, {x: a}, {y: b}))
                ws.append(pab / px[a])
        vals, ws = np.array(vals), np.array(ws)
        m = (ws * vals).sum()
        total += px[a] * (ws * (vals - m) ** 2).sum()
    return total


def test_dispersion_examples(bsc_joint):
    assert channel_dispersion(Pmf.uniform(3), Channel.noiseless(3)) == pytest.approx(0.0, abs=1e-15)
    indep = Channel(np.tile([0.3, 0.7], (2, 1)))
    assert channel_dispersion(Pmf.uniform(2), indep) == pytest.approx(0.0, abs=1e-15)
    v = channel_dispersion(Pmf.uniform(2), Channel.bsc(0.25))
    assert v == pytest.approx(BSC25_DISPERSION, abs=1e-12)
    assert v == pytest.approx(0.47101, abs=1e-5)
    assert v == pytest.approx(_brute_dispersion(bsc_joint), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_dispersion_matches_brute_force(data):
    ch = data.draw(channels())
    q = data.draw(pmfs(size=ch.input.size))
    assert channel_dispersion(q, ch) == pytest.approx(_brute_dispersion(ch.joint(q)), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_dispersion_nonnegative_and_zero_for_deterministic(data):
    k = data.draw(st.integers(1, 4))
    out = data.draw(st.integers(1, 4))
    mapping = data.draw(st.lists(st.integers(0, out - 1), min_size=k, max_size=k))
    q = data.draw(pmfs(size=k))
    assert channel_dispersion(q, Channel.deterministic(mapping, out)) == pytest.approx(0.0, abs=1e-12)
    ch = data.draw(channels(k=k))
    assert channel_dispersion(q, ch) >= 0.0


@settings(max_examples=80, deadline=None)
@given(joint_pmfs(names=["X", "Y"], max_size=4))
def test_expected_conditional_information_is_entropy(p):
    acc = 0.0
    py = marginalize(p, ["Y"]).probs
    for x in range(p.shape[0]):
        for y in range(p.shape[1]):
            if p((x, y)) > 0:
                acc += p((x, y)) * conditional_information(p, {"X": x}, {"Y": y})
    assert acc == pytest.approx(entropy(p, ["X"], ["Y"]), abs=1e-9)
    assert py.sum() == pytest.approx(1.0)


@settings(max_examples=80, deadline=None)
@given(joint_pmfs(names=["X", "Y"], max_size=4))
def test_expected_information_density_is_mutual_information(p):
    acc = 0.0
    for x in range(p.shape[0]):
        for y in range(p.shape[1]):
            if p((x, y)) > 0:
                acc += p((x, y)) * information_density(p, {"X": x}, {"Y": y})
    mi = entropy(p, ["X"]) - entropy(p, ["X"], ["Y"])
    assert acc == pytest.approx(mi, abs=1e-9)
    assert mutual_information(p, "X", "Y") == pytest.approx(mi, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_total_variation_is_a_metric(data):
    k = data.draw(st.integers(1, 5))
    a, b, c = (data.draw(pmfs(size=k)) for _ in range(3))
    assert total_variation(a, b) == pytest.approx(total_variation(b, a), abs=1e-15)
    assert total_variation(a, a) <= 1e-12
    assert total_variation(a, c) <= total_variation(a, b) + total_variation(b, c) + 1e-12
    assert 0.0 <= total_variation(a, b) <= 1.0 + 1e-12


# -- broadcast covariance and wiretap variances ----------------------------------


def test_bc_covariance_independent_outputs_zero():
    q = JointPmf.from_array(np.full((2, 2, 2), 1 / 8), ["U1", "U2", "X"])
    ch = Channel(np.tile(np.full((2, 2), 0.25), (2, 1, 1)))
    np.testing.assert_allclose(np.asarray(bc_covariance(q, ch)), np.zeros((2, 2)), atol=1e-15)


def test_bc_covariance_diagonal_matches_marginal_dispersion():
    # U1, U2 independent uniform bits, X = (U1, U2) through BSC(0.1) x BSC(0.2)
    q = np.zeros((2, 2, 4))
    for u1 in range(2):
        for u2 in range(2):
            q[u1, u2, 2 * u1 + u2] = 0.25
    q = JointPmf.from_array(q, ["U1", "U2", "X"])
    ch = Channel.product(Channel.bsc(0.1, "A"), Channel.bsc(0.2, "B"))
    ch = Channel(ch.rows, "X", ["Y1", "Y2"])
    cov = np.asarray(bc_covariance(q, ch))
    v1 = channel_dispersion(Pmf.uniform(2), Channel.bsc(0.1))
    v2 = channel_dispersion(Pmf.uniform(2), Channel.bsc(0.2))
    assert cov[0, 0] == pytest.approx(v1, abs=1e-12)
    assert cov[1, 1] == pytest.approx(v2, abs=1e-12)
    assert cov[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_bc_covariance_identical_branches_fully_correlated():
    q = np.zeros((2, 2, 2))
    q[0, 0, 0] = q[1, 1, 1] = 0.5
    q = JointPmf.from_array(q, ["U1", "U2", "X"])
    # both receivers see the same BSC(0.25) output
    rows = np.zeros((2, 2, 2))
    for x in range(2):
        rows[x, x, x] = 0.75
        rows[x, 1 - x, 1 - x] = 0.25
    cov = np.asarray(bc_covariance(q, Channel(rows, "X", ["Y1", "Y2"])))
    np.testing.assert_allclose(cov, np.full((2, 2), BSC25_DISPERSION), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_bc_covariance_symmetric_psd(data):
    q = data.draw(joint_pmfs(names=["U1", "U2", "X"], max_size=2))
    k = q.shape[2]
    o1, o2 = data.draw(st.integers(1, 3)), data.draw(st.integers(1, 3))
    ch = data.draw(channels(k=k, out=o1 * o2))
    ch = Channel(ch.rows.reshape(k, o1, o2), "X", ["Y1", "Y2"])
    cov = np.asarray(bc_covariance(q, ch))
    assert cov[0, 1] == cov[1, 0]
    assert np.linalg.eigvalsh(cov).min() >= -1e-10


def test_cov_matrix_validation():
    with pytest.raises(ValueError):
        CovMatrix2([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        CovMatrix2([[1.0, 0.1], [0.0, 1.0]])


def test_wiretap_variances_examples():
    const_z = Channel.broadcast(Channel.bsc(0.25), Channel(np.ones((2, 1))), outputs=["Y", "Z"])
    vy, vz = wiretap_variances(Pmf.uniform(2), const_z, "X")
    assert vz == 0.0
    assert vy == pytest.approx(BSC25_DISPERSION, abs=1e-12)
    clean = Channel.broadcast(Channel.noiseless(2), Channel.bsc(0.3), outputs=["Y", "Z"])
    assert wiretap_variances(Pmf.uniform(2), clean, "X")[0] == pytest.approx(0.0, abs=1e-15)


def test_wiretap_variances_conditioning_variants_differ_with_prefix_channel():
    # U uniform bit, X = U through BSC(0.2); Y = X, Z = BSC(0.3)(X)
    qux = Channel.bsc(0.2, "U", "X").joint(Pmf.uniform(2, "U"))
    ch = Channel.broadcast(Channel.noiseless(2), Channel.bsc(0.3), outputs=["Y", "Z"])
    vy_ux, _ = wiretap_variances(qux, ch, "U", "ux")
    vy_u, _ = wiretap_variances(qux, ch, "U", "u")
    # given (U, X) the output Y is fixed, so that variant vanishes
    assert vy_ux == pytest.approx(0.0, abs=1e-15)
    assert vy_u == pytest.approx(channel_dispersion(Pmf.uniform(2), Channel.bsc(0.2)), abs=1e-12)
