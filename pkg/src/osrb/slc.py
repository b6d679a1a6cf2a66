"""Stochastic likelihood coding of binned sources.

The decoder sees the bin indices ``b_V`` and the side information ``z`` and
draws an estimate from ``t(x | z)`` restricted to the bin, where the metric
``t`` may differ from the true source pmf ``p``. This module evaluates the
correct-decoding lower bound, its weakened error bound, and exact and Monte
Carlo oracles for both.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .binning import (
    CONFIDENCE,
    ENUMERATION_GUARD,
    BinningAssignment,
    BinningSpec,
    _CHUNK,
    _log2,
    _marginal_over,
    _nonempty_subsets,
    _z_index,
    canonical_source,
    iter_all_assignments,
    joint_bin_table,
    mean_and_halfwidth,
    sample_assignment_batch,
)
from .prob import Alphabet, JointPmf


class EmptyBinError(ValueError):
    """The observed bin holds no candidate with positive metric."""


@dataclass(frozen=True, eq=False)
class SlcDecoder:
    t_joint: JointPmf
    assignment: BinningAssignment

    def __post_init__(self):
        canonical_source(self.t_joint, self.assignment.spec)

    def _table(self) -> np.ndarray:
        return canonical_source(self.t_joint, self.assignment.spec)[0]


def _posterior_weights(dec: SlcDecoder, z, b_v: Sequence[int]) -> np.ndarray:
    t, z_axes = canonical_source(dec.t_joint, dec.assignment.spec)
    zi = _z_index(z, z_axes)
    spec = dec.assignment.spec
    J = joint_bin_table(spec, [m[None, :] for m in dec.assignment.maps])[0]
    b = int(np.ravel_multi_index(tuple(b_v), spec.bins))
    w = np.where(J == b, t[..., zi], 0.0)
    total = w.sum()
    if total <= 0:
        raise EmptyBinError(f"bin {tuple(b_v)} has no candidate with positive metric at z={z}")
    return w / total


def slc_posterior(dec: SlcDecoder, z, b_v: Sequence[int]) -> JointPmf:
    """Metric restricted to the bin and renormalised, as a pmf over the binned axes."""
    w = _posterior_weights(dec, z, b_v)
    spec = dec.assignment.spec
    return JointPmf([Alphabet(n, s) for n, s in zip(spec.names, spec.sizes)], w, validate=False)


def slc_decode(dec: SlcDecoder, z, b_v: Sequence[int], rng: np.random.Generator | None = None, deterministic: bool = False) -> tuple[int, ...]:
    """Draw from :func:`slc_posterior`; ``deterministic=True`` returns the first argmax instead."""
    w = _posterior_weights(dec, z, b_v)
    if deterministic:
        flat = int(np.argmax(w.ravel()))
    else:
        if rng is None:
            raise ValueError("stochastic decoding needs an rng")
        flat = int(rng.choice(w.size, p=w.ravel()))
    return tuple(int(i) for i in np.unravel_index(flat, w.shape))


def _pt_tables(p_joint: JointPmf, t_joint: JointPmf, spec: BinningSpec):
    p, _ = canonical_source(p_joint, spec)
    t, _ = canonical_source(t_joint, spec)
    if p.shape != t.shape:
        raise ValueError(f"source and metric alphabets differ: {p.shape} vs {t.shape}")
    return p, t


def thm2_lower_bound(p_joint: JointPmf, t_joint: JointPmf, spec: BinningSpec) -> float:
    """E_p[ 1 / (1 + sum_S M_S^{-1} 2^{h_t(X_S | X_{S^c}, Z)}) ] over nonempty S."""
    p, t = _pt_tables(p_joint, t_joint, spec)
    k = len(spec.parts)
    bins = np.asarray(spec.bins, dtype=float)
    denom = np.ones_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        for S in _nonempty_subsets(k):
            rest = [v for v in range(k) if v not in S]
            # 2^{h_t(x_S | x_rest, z)} = t(x_rest, z) / t(x_V, z)
            ratio = np.broadcast_to(_marginal_over(t, rest, k), t.shape) / t
            denom = denom + ratio / bins[list(S)].prod()
        term = np.where(t > 0, 1.0 / denom, 0.0)
    return float((p * term).sum())


@dataclass(frozen=True, eq=False)
class SGamma2Params:
    t_joint: JointPmf
    spec: BinningSpec
    gamma: float
    # "marginal": h_t(x_S | z);
    # "chain": h_t(x_S | x_{S^c}, z), the quantity the weakening step bounds.
    conditioning: str = "chain"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.conditioning not in ("marginal", "chain"):
            raise ValueError("conditioning must be 'marginal' or 'chain'")


def sgamma2_table(params: SGamma2Params) -> np.ndarray:
    t, _ = canonical_source(params.t_joint, params.spec)
    k = len(params.spec.parts)
    logm = np.log2(np.asarray(params.spec.bins, dtype=float))
    tz = _marginal_over(t, [], k)
    member = t > 0
    for S in _nonempty_subsets(k):
        if params.conditioning == "marginal":
            num, den = _marginal_over(t, S, k), tz
        else:
            rest = [v for v in range(k) if v not in S]
            num, den = t, _marginal_over(t, rest, k)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = _log2(den) - _log2(num)
            ok = logm[list(S)].sum() - h > params.gamma
        member &= np.broadcast_to(np.nan_to_num(ok, nan=False).astype(bool), t.shape)
    return member


def sgamma2_membership(params: SGamma2Params, x_v: Sequence[int], z=0) -> bool:
    _, z_axes = canonical_source(params.t_joint, params.spec)
    return bool(sgamma2_table(params)[tuple(x_v) + (_z_index(z, z_axes),)])


def thm2_upper_bound(p_joint: JointPmf, params: SGamma2Params) -> float:
    """p(complement of the decoding set) + (2^|V| - 1) 2^-gamma."""
    p, _ = canonical_source(p_joint, params.spec)
    outside = float(p[~sgamma2_table(params)].sum())
    k = len(params.spec.parts)
    return outside + (2**k - 1) * 2.0 ** (-params.gamma)


def weakened_correct_bound(p_joint: JointPmf, params: SGamma2Params) -> float:
    """p(decoding set) / (1 + (2^|V| - 1) 2^-gamma), the intermediate step of the weakening."""
    p, _ = canonical_source(p_joint, params.spec)
    inside = float(p[sgamma2_table(params)].sum())
    k = len(params.spec.parts)
    return inside / (1 + (2**k - 1) * 2.0 ** (-params.gamma))


def _correct_batch(p: np.ndarray, t: np.ndarray, spec: BinningSpec, maps) -> np.ndarray:
    """Probability of correct decoding for each assignment in the batch."""
    J = joint_bin_table(spec, maps)
    K = J.shape[0]
    nb, nz = spec.total_bins, p.shape[-1]
    flat = J.reshape(K, -1)
    idx = (np.arange(K)[:, None, None] * nb + flat[:, :, None]) * nz + np.arange(nz)[None, None, :]
    tw = np.broadcast_to(t.reshape(1, -1, nz), idx.shape)
    D = np.bincount(idx.ravel(), weights=tw.ravel(), minlength=K * nb * nz)
    den = D[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(tw > 0, tw / den, 0.0)
    return (p.reshape(1, -1, nz) * post).sum(axis=(1, 2))


def exact_expected_correct(p_joint: JointPmf, t_joint: JointPmf, spec: BinningSpec, guard: int = ENUMERATION_GUARD) -> float:
    """Average probability of correct decoding over every binning assignment."""
    p, t = _pt_tables(p_joint, t_joint, spec)
    total = 0.0
    for maps in iter_all_assignments(spec, guard):
        total += float(_correct_batch(p, t, spec, maps).sum())
    return total / spec.assignment_count()


def mc_error_prob(
    p_joint: JointPmf,
    t_joint: JointPmf,
    spec: BinningSpec,
    trials: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Empirical error frequency of the full pipeline (binning, source, bins, SLC draw).

    An observation whose bin has no positive-metric candidate counts as an error.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    p, t = _pt_tables(p_joint, t_joint, spec)
    nz = p.shape[-1]
    nx = p.size // nz
    pflat = p.reshape(-1)
    errors = []
    left = trials
    while left:
        K = min(left, _CHUNK)
        left -= K
        J = joint_bin_table(spec, sample_assignment_batch(spec, rng, K)).reshape(K, nx)
        cell = rng.choice(pflat.size, size=K, p=pflat / pflat.sum())
        x, z = np.divmod(cell, nz)
        b = J[np.arange(K), x]
        w = t.reshape(nx, nz)[:, z].T * (J == b[:, None])
        tot = w.sum(axis=1)
        ok = tot > 0
        cdf = np.cumsum(w, axis=1)
        u = rng.random(K) * tot
        xhat = np.minimum((cdf <= u[:, None]).sum(axis=1), nx - 1)
        errors.append((~ok | (xhat != x)).astype(float))
    return mean_and_halfwidth(np.concatenate(errors), CONFIDENCE)


def union_additive_term(gamma: float, constant: float = 4.0) -> float:
    """Additive term ``constant * 2^-gamma`` of the two-decoder union bound.

    The default 4 is the looser count; 3 = 2^2 - 1 counts only the nonempty subsets of two parts.
    """
    return constant * 2.0 ** (-gamma)


def two_decoder_error_bound(
    joint: JointPmf,
    metrics: tuple[JointPmf, JointPmf],
    bins: tuple[int, int],
    gamma: float,
    u_axes: tuple[str, str] = ("U1", "U2"),
    y_axes: tuple[str, str] = ("Y1", "Y2"),
    constant: float = 4.0,
) -> float:
    """Union bound on the error of two independent SLC decoders (one per receiver).

    ``metrics[j]`` is a pmf over ``(u_axes[j], y_axes[j])``; receiver j keeps
    ``(u_j, y_j)`` when log2 F_j - h_t(u_j | y_j) > gamma.
    """
    member = np.ones(joint.shape, dtype=bool)
    for j in range(2):
        t = metrics[j].transpose([u_axes[j], y_axes[j]]).probs
        ty = t.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = _log2(ty) - _log2(t)
            ok = np.nan_to_num(np.log2(bins[j]) - h > gamma, nan=False).astype(bool)
        shape = [1] * len(joint.names)
        shape[joint.axis_index(u_axes[j])] = t.shape[0]
        shape[joint.axis_index(y_axes[j])] = t.shape[1]
        member &= np.broadcast_to(ok.reshape(shape), joint.shape)
    return float(joint.probs[~member].sum()) + union_additive_term(gamma, constant)


def _single_user_correct(t: np.ndarray, F: int, guard: int) -> np.ndarray:
    """c(u, y) = E_B[ T(u | y, B(u)) ] for a one-part binning of U with F bins."""
    nu, ny = t.shape
    spec = BinningSpec([("U", nu, F)])
    acc = np.zeros((nu, ny))
    for maps in iter_all_assignments(spec, guard):
        J = maps[0]
        same = J[:, :, None] == J[:, None, :]  # (K, u, ubar)
        den = np.einsum("kab,by->kay", same.astype(float), t)
        with np.errstate(divide="ignore", invalid="ignore"):
            acc += np.where(t[None] > 0, t[None] / den, 0.0).sum(axis=0)
    return acc / spec.assignment_count()


def exact_two_decoder_error(
    joint: JointPmf,
    metrics: tuple[JointPmf, JointPmf],
    bins: tuple[int, int],
    u_axes: tuple[str, str] = ("U1", "U2"),
    y_axes: tuple[str, str] = ("Y1", "Y2"),
    guard: int = ENUMERATION_GUARD,
) -> float:
    """Exact expected probability that either receiver errs, over independent binnings of U1 and U2."""
    order = [u_axes[0], y_axes[0], u_axes[1], y_axes[1]]
    extra = [n for n in joint.names if n not in order]
    p = joint.transpose(order + extra).probs
    if extra:
        p = p.sum(axis=tuple(range(4, p.ndim)))
    c = [
        _single_user_correct(metrics[j].transpose([u_axes[j], y_axes[j]]).probs, bins[j], guard)
        for j in range(2)
    ]
    correct = np.einsum("abcd,ab,cd->", p, c[0], c[1])
    return 1.0 - float(correct)


def reference_thm2_lower_bound(p_joint: JointPmf, t_joint: JointPmf, spec: BinningSpec) -> float:
    """Point-by-point evaluation of the correct-decoding bound through conditional informations.

    Slow; kept as an independent cross-check of :func:`thm2_lower_bound`.
    """
    from .prob import conditional_information, marginalize

    names = list(spec.names)
    z_names = [n for n in p_joint.names if n not in names]
    total = 0.0
    for idx in itertools.product(*[range(a.size) for a in p_joint.axes]):
        point = dict(zip(p_joint.names, idx))
        mass = p_joint(point)
        if mass == 0:
            continue
        if t_joint(point) == 0:
            continue
        den = 1.0
        for r in range(1, len(names) + 1):
            for S in itertools.combinations(names, r):
                given = {n: point[n] for n in names if n not in S} | {n: point[n] for n in z_names}
                target = {n: point[n] for n in S}
                sub = marginalize(t_joint, list(S) + list(given))
                h = conditional_information(sub, target, given) if given else conditional_information(sub, target)
                m = np.prod([spec.bins[names.index(n)] for n in S])
                den += 2.0**h / m
        total += mass / den
    return total
