"""Monte Carlo and exact simulators for the binning-based channel protocols.

Point-to-point: a random binning (m, f) of sequences, a type-class encoder that
picks a uniform codeword from the (m, f) bin, and a likelihood-sampling
decoder that draws from q(x|y) restricted to bin f. Sequences are sampled,
never enumerated, and bins come from a keyed 64-bit hash so that a fresh
binning per trial costs nothing.

Wiretap: for tiny n the whole protocol is tabulated, so the decoding error
and the eavesdropper's total variation are exact for the sampled binning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .binning import CONFIDENCE, GuardError
from .prob import marginalize
from .secondorder import DEFAULT_POLICY, LogTermPolicy, P2PSetup, WiretapSetup, p2p_rtilde, wiretap_rtilde
from .typeclass import enumerate_type_class, nearest_ntype, sample_from_type, type_class_log_size

DRAW_BUDGET = 2**22
TYPE_ENUM_LIMIT = 2**17
EXACT_SEQUENCES = 2**16
EXACT_CELLS = 2**24
_U64 = np.uint64


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _U64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
        return x ^ (x >> _U64(31))


def sequence_hash(seqs: np.ndarray, key: int, alphabet_size: int) -> np.ndarray:
    """Keyed 64-bit hash of each row of ``seqs`` (symbols packed into 64-bit words)."""
    seqs = np.atleast_2d(np.asarray(seqs, dtype=np.uint64))
    bits = max(1, math.ceil(math.log2(alphabet_size)))
    per = 64 // bits
    h = np.full(seqs.shape[0], _U64(key & 0xFFFFFFFFFFFFFFFF))
    for start in range(0, seqs.shape[1], per):
        block = seqs[:, start : start + per]
        shifts = (np.arange(block.shape[1], dtype=np.uint64) * _U64(bits))
        word = np.bitwise_or.reduce(block << shifts, axis=1)
        h = _splitmix64(h ^ word)
    return _splitmix64(h ^ _U64(seqs.shape[1]))


def bin_count(bits: float) -> int:
    """Number of bins 2^bits, rounded up (at least 1)."""
    if bits <= 0:
        return 1
    if bits > 62:
        raise GuardError(f"{bits:.1f} bits of binning is beyond what a simulation can sample")
    return max(1, math.ceil(2.0**bits - 1e-9))


def message_count(n: int, rate: float) -> int:
    """floor(2^{nR}), at least 1."""
    bits = n * rate
    if bits > 62:
        raise GuardError(f"{bits:.1f} message bits is beyond what a simulation can sample")
    return max(1, math.floor(2.0**bits + 1e-9))


def clopper_pearson(errors: int, trials: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    alpha = 1 - confidence
    lo = 0.0 if errors == 0 else float(stats.beta.ppf(alpha / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(stats.beta.ppf(1 - alpha / 2, errors + 1, trials - errors))
    return lo, hi


@dataclass
class SimulationResult:
    """Outcome of a protocol simulation.

    ``error`` is the empirical block error rate; ``half_width`` the larger side
    of the Clopper-Pearson interval at ``confidence``; ``upper`` its upper end.
    """

    error: float
    half_width: float
    upper: float
    trials: int
    messages: int
    bins: int
    encoder_failures: int = 0
    decoder_failures: int = 0
    confidence: float = CONFIDENCE

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _rejection(draw, accept, budget: int, batch: int):
    """First accepted draw, or None after ``budget`` draws."""
    used = 0
    while used < budget:
        k = min(batch, budget - used)
        cand = draw(k)
        hit = np.flatnonzero(accept(cand))
        if hit.size:
            return cand[hit[0]], used + hit[0] + 1
        used += k
    return None, used


def p2p_simulate(
    setup: P2PSetup,
    R: float,
    policy: LogTermPolicy = DEFAULT_POLICY,
    trials: int = 1000,
    rng: np.random.Generator | None = None,
    rtilde_bits: float | None = None,
    draw_budget: int = DRAW_BUDGET,
) -> SimulationResult:
    """Block error rate of the binning protocol at rate ``R`` bits per use.

    Each trial draws a fresh binning key, a uniform message m and a uniform
    shared index f, encodes with a uniform type-class codeword from bin (m, f)
    (by listing the class when it has at most ``TYPE_ENUM_LIMIT`` members,
    otherwise by rejection sampling), sends it through the channel, and decodes by
    rejection from prod_i q(x_i | y_i) until a candidate lands in bin f.
    Running out of draws on either side counts as an error. With a single
    message the outcome is known and every trial is correct.

    ``rtilde_bits`` overrides the total shared-randomness bits n R~.
    """
    if rng is None:
        raise ValueError("pass an explicit numpy Generator")
    n = setup.n
    M = message_count(n, R)
    if M == 1:
        return SimulationResult(0.0, clopper_pearson(0, trials)[1], clopper_pearson(0, trials)[1], trials, 1, 1)
    F = bin_count(p2p_rtilde(setup, policy) if rtilde_bits is None else rtilde_bits)
    k = setup.input.size
    ntype = nearest_ntype(setup.input, n)
    W = setup.channel.rows.reshape(k, -1)
    joint = setup.input.probs[:, None] * W
    with np.errstate(invalid="ignore"):
        post = np.nan_to_num(joint / joint.sum(axis=0, keepdims=True)).T  # (|Y|, k)
    cdf_post = np.cumsum(post, axis=1)
    cdf_w = np.cumsum(W, axis=1)
    batch = int(min(max(4 * M * F, 256), 2**15))
    # small type classes are listed once so an empty (m, f) bin is detected exactly
    members = enumerate_type_class(ntype) if type_class_log_size(ntype) <= math.log2(TYPE_ENUM_LIMIT) else None

    def bins(seqs, key):
        h = sequence_hash(seqs, key, k)
        return h % _U64(M), _splitmix64(h) % _U64(F)

    errors = enc_fail = dec_fail = 0
    for _ in range(trials):
        key = int(rng.integers(0, 2**63))
        m = int(rng.integers(M))
        f = int(rng.integers(F))

        def enc_accept(c):
            bm, bf = bins(c, key)
            return (bm == m) & (bf == f)

        if members is not None:
            bm, bf = bins(members, key)
            hits = np.flatnonzero((bm == m) & (bf == f))
            x = members[hits[rng.integers(hits.size)]] if hits.size else None
        else:
            x, _ = _rejection(lambda s: sample_from_type(ntype, rng, s), enc_accept, draw_budget, batch)
        if x is None:
            enc_fail += 1
            errors += 1
            continue
        u = rng.random(n)
        y = (u[:, None] > cdf_w[x]).sum(axis=1)
        y = np.minimum(y, W.shape[1] - 1)
        cy = cdf_post[y]

        def dec_draw(s):
            r = rng.random((s, n))
            out = np.zeros((s, n), dtype=np.int64)
            for j in range(k - 1):
                out += r > cy[:, j]
            return out

        xh, _ = _rejection(dec_draw, lambda c: bins(c, key)[1] == f, draw_budget, batch)
        if xh is None:
            dec_fail += 1
            errors += 1
            continue
        if int(bins(xh[None], key)[0][0]) != m:
            errors += 1
    lo, hi = clopper_pearson(errors, trials)
    err = errors / trials
    return SimulationResult(err, max(err - lo, hi - err), hi, trials, M, F, enc_fail, dec_fail)


# -- wiretap -----------------------------------------------------------------


@dataclass
class SecrecyEstimate:
    """Decoding error and eavesdropper total variation for one binning and the chosen f.

    ``tv`` is 1/2 sum_{m,z} |p(m, z) - p(z)/M|. In exact mode the half-widths
    and the bias bound are 0.
    """

    tv: float
    tv_half_width: float
    tv_bias_bound: float
    error: float
    error_half_width: float
    f: int
    f_scanned: int
    messages: int
    bins: int
    exact: bool
    empty_bins: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _effective_rows(setup: WiretapSetup):
    joint = setup.channel.joint(setup.q_ux)
    u = setup.u_axis
    y, z = setup.channel.output_names
    qu = marginalize(joint, [u]).probs
    uy = marginalize(joint, [u, y]).probs
    uz = marginalize(joint, [u, z]).probs
    with np.errstate(invalid="ignore", divide="ignore"):
        wy = np.where(qu[:, None] > 0, uy / qu[:, None], 0.0)
        wz = np.where(qu[:, None] > 0, uz / qu[:, None], 0.0)
    return qu, wy, wz


def _kron_power(w: np.ndarray, n: int) -> np.ndarray:
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, w)
    return out


def _all_sequences(k: int, n: int) -> np.ndarray:
    return np.array(np.unravel_index(np.arange(k**n), (k,) * n)).T


def wiretap_simulate_secrecy(
    setup: WiretapSetup,
    R: float,
    policy: LogTermPolicy = DEFAULT_POLICY,
    trials: int = 10000,
    rng: np.random.Generator | None = None,
    rtilde_bits: float | None = None,
    f_scan: int = 16,
    estimator: str = "exact",
) -> SecrecyEstimate:
    """Simulate the wiretap protocol for one sampled binning and the best scanned f.

    The binning (m, f) is drawn over all of U^n. For each scanned f, a message
    whose (m, f) bin holds no type-class codeword counts as a decoding error
    and its codeword falls back to a uniform type-class word. The reported f
    minimizes tv / eps_sec + error / eps_r.

    ``estimator="exact"`` tabulates p(m, z) and the decoding error; it needs
    |U|^n, |Y|^n and |Z|^n small. ``estimator="plugin"`` samples ``trials``
    (m, z) pairs per f, reports the plug-in TV with a McDiarmid half-width
    and a 1/2 sqrt(cells / trials) bias bound, and samples the decoding error.
    """
    if rng is None:
        raise ValueError("pass an explicit numpy Generator")
    if estimator not in ("exact", "plugin"):
        raise ValueError("estimator must be 'exact' or 'plugin'")
    n = setup.n
    qu, wy, wz = _effective_rows(setup)
    ku, ky, kz = wy.shape[0], wy.shape[1], wz.shape[1]
    if ku**n > EXACT_SEQUENCES or (ku**n) * (ky**n) > EXACT_CELLS:
        raise GuardError(f"|U|^n={ku**n} and |Y|^n={ky**n} are too large to tabulate the decoder")
    if estimator == "exact" and (ku**n) * (kz**n) > EXACT_CELLS:
        raise GuardError(f"|Z|^n={kz**n} is too large for exact histograms; pass estimator='plugin'")
    M = message_count(n, R)
    F = bin_count(wiretap_rtilde(setup, policy) if rtilde_bits is None else rtilde_bits)
    ntype = nearest_ntype(qu, n)
    seqs = _all_sequences(ku, n)
    in_type = np.all(np.stack([(seqs == a).sum(axis=1) == c for a, c in enumerate(ntype.counts)]), axis=0)
    m_tab = rng.integers(M, size=seqs.shape[0])
    f_tab = rng.integers(F, size=seqs.shape[0])
    prior = np.prod(qu[seqs], axis=1)
    PY = _kron_power(wy, n)
    PZ = _kron_power(wz, n) if estimator == "exact" else None
    type_idx = np.flatnonzero(in_type)
    cands = np.arange(F) if F <= f_scan else np.sort(rng.choice(F, size=f_scan, replace=False))

    best = None
    for f in cands:
        f = int(f)
        codebooks = [type_idx[(m_tab[type_idx] == m) & (f_tab[type_idx] == f)] for m in range(M)]
        empty = sum(1 for c in codebooks if c.size == 0)
        books = [c if c.size else type_idx for c in codebooks]
        in_bin = np.flatnonzero(f_tab == f)
        # posterior mass of each message given y, restricted to bin f
        w = prior[in_bin, None] * PY[in_bin]
        tot = w.sum(axis=0)
        onehot = np.zeros((M, in_bin.size))
        onehot[m_tab[in_bin], np.arange(in_bin.size)] = 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            G = np.where(tot > 0, (onehot @ w) / tot, 0.0)
        if estimator == "exact":
            correct = sum(
                (PY[codebooks[m]] * G[m]).sum() / codebooks[m].size for m in range(M) if codebooks[m].size
            ) / M
            pz_m = np.stack([PZ[b].mean(axis=0) for b in books])
            pz = pz_m.mean(axis=0)
            tv = float(np.abs(pz_m - pz).sum() / (2 * M))
            rec = SecrecyEstimate(tv, 0.0, 0.0, float(1 - correct), 0.0, f, len(cands), M, F, True, empty)
        else:
            rec = _plugin_estimate(books, codebooks, G, wy, wz, seqs, n, M, F, f, len(cands), trials, rng, empty)
        if M == 1:
            # a single message is always decoded correctly
            rec.error, rec.error_half_width = 0.0, 0.0
        score = rec.tv / setup.eps_sec + rec.error / setup.eps_r
        if best is None or score < best[0]:
            best = (score, rec)
    return best[1]


def _plugin_estimate(books, codebooks, G, wy, wz, seqs, n, M, F, f, scanned, trials, rng, empty):
    kz = wz.shape[1]
    m = rng.integers(M, size=trials)
    pick = np.array([books[i][rng.integers(books[i].size)] for i in m])
    useq = seqs[pick]
    cz = np.cumsum(wz, axis=1)[useq]
    z = np.minimum((rng.random((trials, n))[:, :, None] > cz).sum(axis=2), kz - 1)
    zidx = np.ravel_multi_index(tuple(z.T), (kz,) * n)
    pairs, counts = np.unique(np.stack([zidx, m]), axis=1, return_counts=True)
    pm = counts / trials
    zs, zinv = np.unique(pairs[0], return_inverse=True)
    pz = np.bincount(zinv, weights=pm)
    seen = np.bincount(zinv)
    tv = 0.5 * (np.abs(pm - pz[zinv] / M).sum() + ((M - seen) * pz / M).sum())
    half = math.sqrt(math.log(2 / (1 - CONFIDENCE)) / (2 * trials))
    bias = 0.5 * math.sqrt(M * kz**n / trials) + 0.5 * math.sqrt(kz**n / trials)
    # decoding error: y from the sampled codeword, then the exact posterior mass on the true message
    cy = np.cumsum(wy, axis=1)[useq]
    y = np.minimum((rng.random((trials, n))[:, :, None] > cy).sum(axis=2), wy.shape[1] - 1)
    yidx = np.ravel_multi_index(tuple(y.T), (wy.shape[1],) * n)
    ok = np.array([codebooks[mi].size > 0 for mi in m])
    p_ok = np.where(ok, G[m, yidx], 0.0)
    err = 1 - p_ok
    e_mean = float(err.mean())
    e_half = float(stats.norm.ppf(0.5 + CONFIDENCE / 2) * err.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 1.0
    return SecrecyEstimate(float(tv), half, bias, e_mean, e_half, f, scanned, M, F, False, empty)
