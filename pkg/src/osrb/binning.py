"""Distributed random binning and the one-shot approximation-of-uniformity bound.

Bins are 0-based here: part ``v`` maps its alphabet into ``range(M_v)``.

A source is a :class:`~osrb.prob.JointPmf` whose binned axes are named in the
:class:`BinningSpec`; every remaining axis is side information ``Z``. Internally
the source is reshaped to ``p[x_1, ..., x_k, z]`` with ``Z`` flattened row-major
(size 1 when there is no side information).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import stats

from .prob import Alphabet, JointPmf, Pmf

ENUMERATION_GUARD = 10**6
_CHUNK = 4096
CONFIDENCE = 0.99


class GuardError(RuntimeError):
    """An exact oracle was asked to enumerate more than it is allowed to."""


@dataclass(frozen=True)
class BinningSpec:
    """Binned parts as ``(axis name, alphabet size, number of bins)``."""

    parts: tuple[tuple[str, int, int], ...]

    def __init__(self, parts: Sequence[tuple[str, int, int]]):
        parts = tuple((str(n), int(s), int(m)) for n, s, m in parts)
        if not parts:
            raise ValueError("a binning needs at least one part")
        for name, size, m in parts:
            if size < 1 or m < 1:
                raise ValueError(f"part {name!r}: alphabet size and bin count must be >= 1")
        if len({p[0] for p in parts}) != len(parts):
            raise ValueError("part names must be unique")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def for_source(cls, source: JointPmf, bins: dict[str, int]) -> "BinningSpec":
        return cls([(name, source.alphabet(name).size, m) for name, m in bins.items()])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p[0] for p in self.parts)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(p[1] for p in self.parts)

    @property
    def bins(self) -> tuple[int, ...]:
        return tuple(p[2] for p in self.parts)

    @property
    def total_bins(self) -> int:
        return int(np.prod(self.bins))

    def assignment_count(self) -> int:
        return math.prod(m**s for _, s, m in self.parts)

    def to_json(self) -> list:
        return [[s, m] for _, s, m in self.parts]


@dataclass(frozen=True, eq=False)
class BinningAssignment:
    """One realisation of the random binning: ``maps[v][x]`` is the bin of symbol x in part v."""

    spec: BinningSpec
    maps: tuple[np.ndarray, ...]

    def __init__(self, spec: BinningSpec, maps: Sequence):
        arrs = []
        for (name, size, m), mp in zip(spec.parts, maps, strict=True):
            a = np.array(mp, dtype=np.int64)
            if a.shape != (size,) or a.min() < 0 or a.max() >= m:
                raise ValueError(f"part {name!r}: map must send {size} symbols into range({m})")
            a.setflags(write=False)
            arrs.append(a)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "maps", tuple(arrs))

    def bins_of(self, x_v: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(mp[x]) for mp, x in zip(self.maps, x_v))


def canonical_source(source: JointPmf, spec: BinningSpec) -> tuple[np.ndarray, list[Alphabet]]:
    """Reorder ``source`` to ``p[x_1..x_k, z]``; returns the array and the Z axes."""
    for name, size, _ in spec.parts:
        if source.alphabet(name).size != size:
            raise ValueError(f"axis {name!r} has size {source.alphabet(name).size}, spec says {size}")
    z_axes = [a for a in source.axes if a.name not in spec.names]
    order = list(spec.names) + [a.name for a in z_axes]
    arr = source.transpose(order).probs
    zsize = int(np.prod([a.size for a in z_axes])) if z_axes else 1
    return arr.reshape(spec.sizes + (zsize,)), z_axes


def _z_index(z, z_axes: list[Alphabet]) -> int:
    if isinstance(z, dict):
        if not z_axes:
            return 0
        return int(np.ravel_multi_index([z[a.name] for a in z_axes], [a.size for a in z_axes]))
    return int(z)


def sample_binning(spec: BinningSpec, rng: np.random.Generator) -> BinningAssignment:
    """Each symbol of each part gets an independent uniform bin."""
    return BinningAssignment(spec, [rng.integers(0, m, size=s) for _, s, m in spec.parts])


def _strides(spec: BinningSpec) -> np.ndarray:
    bins = np.asarray(spec.bins, dtype=np.int64)
    return np.concatenate([np.cumprod(bins[::-1])[::-1][1:], [1]])


def joint_bin_table(spec: BinningSpec, maps: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened joint bin of every x_V, for a batch of assignments.

    ``maps[v]`` has shape ``(K, |X_v|)``; the result has shape ``(K, |X_1|, ..., |X_k|)``.
    """
    k = len(spec.parts)
    strides = _strides(spec)
    K = maps[0].shape[0]
    out = np.zeros((K,) + spec.sizes, dtype=np.int64)
    for v, mp in enumerate(maps):
        shape = [K] + [1] * k
        shape[v + 1] = spec.sizes[v]
        out += mp.reshape(shape) * strides[v]
    return out


def iter_all_assignments(spec: BinningSpec, guard: int = ENUMERATION_GUARD, chunk: int = _CHUNK) -> Iterator[list[np.ndarray]]:
    """Every assignment in mixed-radix order (parts, then symbols, most significant first), in chunks."""
    total = spec.assignment_count()
    if total > guard:
        raise GuardError(f"{total} binning assignments exceed the enumeration guard of {guard}")
    per_part = [m**s for _, s, m in spec.parts]
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        maps = []
        rem = idx
        digits_by_part = []
        for count in reversed(per_part):
            digits_by_part.append(rem % count)
            rem = rem // count
        digits_by_part.reverse()
        for (_, s, m), code in zip(spec.parts, digits_by_part):
            cols = []
            c = code
            for _ in range(s):
                cols.append(c % m)
                c = c // m
            maps.append(np.stack(cols[::-1], axis=1))
        yield maps


def sample_assignment_batch(spec: BinningSpec, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    return [rng.integers(0, m, size=(count, s)) for _, s, m in spec.parts]


def _induced_batch(p: np.ndarray, spec: BinningSpec, maps) -> np.ndarray:
    """P(b, z) for each assignment in the batch; shape (K, total_bins, |Z|)."""
    J = joint_bin_table(spec, maps)
    K = J.shape[0]
    nb, nz = spec.total_bins, p.shape[-1]
    flat_x = J.reshape(K, -1)
    idx = ((np.arange(K)[:, None, None] * nb + flat_x[:, :, None]) * nz + np.arange(nz)[None, None, :])
    w = np.broadcast_to(p.reshape(1, -1, nz), idx.shape)
    return np.bincount(idx.ravel(), weights=w.ravel(), minlength=K * nb * nz).reshape(K, nb, nz)


def induced_bin_pmf(source: JointPmf, a: BinningAssignment) -> JointPmf:
    """Pmf of (Z, B_V) induced by one assignment."""
    p, z_axes = canonical_source(source, a.spec)
    P = _induced_batch(p, a.spec, [m[None, :] for m in a.maps])[0]
    table = P.T.reshape([ax.size for ax in z_axes] + list(a.spec.bins))
    axes = list(z_axes) + [Alphabet(f"B_{n}", m) for n, m in zip(a.spec.names, a.spec.bins)]
    return JointPmf(axes, table, validate=False)


def _tv_batch(p: np.ndarray, spec: BinningSpec, maps) -> np.ndarray:
    P = _induced_batch(p, spec, maps)
    pz = p.reshape(-1, p.shape[-1]).sum(axis=0)
    ideal = pz[None, None, :] / spec.total_bins
    return 0.5 * np.abs(P - ideal).sum(axis=(1, 2))


def exact_expected_tv(source: JointPmf, spec: BinningSpec, guard: int = ENUMERATION_GUARD) -> float:
    """Average over every assignment of TV(P(b, z), uniform(b) p(z))."""
    p, _ = canonical_source(source, spec)
    total = 0.0
    for maps in iter_all_assignments(spec, guard):
        total += float(_tv_batch(p, spec, maps).sum())
    return total / spec.assignment_count()


def mean_and_halfwidth(values: np.ndarray, confidence: float = CONFIDENCE) -> tuple[float, float]:
    n = values.size
    if n < 2:
        raise ValueError("need at least two trials")
    z = stats.norm.ppf(0.5 + confidence / 2)
    return float(values.mean()), float(z * values.std(ddof=1) / math.sqrt(n))


def mc_expected_tv(source: JointPmf, spec: BinningSpec, trials: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sample mean of the TV over random assignments, with a 99% normal half-width."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    p, _ = canonical_source(source, spec)
    vals = []
    left = trials
    while left:
        k = min(left, _CHUNK)
        vals.append(_tv_batch(p, spec, sample_assignment_batch(spec, rng, k)))
        left -= k
    return mean_and_halfwidth(np.concatenate(vals))


@dataclass(frozen=True, eq=False)
class SGamma1Params:
    source: JointPmf
    t_z: Pmf | np.ndarray | None
    spec: BinningSpec
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def t_vector(self) -> np.ndarray:
        """t over the flattened Z alphabet; ``None`` means the source's own Z marginal."""
        p, _ = canonical_source(self.source, self.spec)
        pz = p.reshape(-1, p.shape[-1]).sum(axis=0)
        if self.t_z is None:
            return pz
        t = np.asarray(self.t_z.probs if isinstance(self.t_z, JointPmf) else self.t_z, dtype=float).ravel()
        if t.size != pz.size:
            raise ValueError(f"t_z has {t.size} entries, Z has {pz.size} symbols")
        return t


def _log2(x):
    with np.errstate(divide="ignore"):
        return np.log2(x)


def _nonempty_subsets(k: int):
    for r in range(1, k + 1):
        yield from itertools.combinations(range(k), r)


def _marginal_over(p: np.ndarray, keep: Sequence[int], k: int) -> np.ndarray:
    """Sum the x-axes not in ``keep`` (keepdims), leaving z alone."""
    drop = tuple(v for v in range(k) if v not in keep)
    return p.sum(axis=drop, keepdims=True) if drop else p


def sgamma1_table(params: SGamma1Params) -> np.ndarray:
    """Boolean table over (x_V, z) of membership in the approximation set."""
    p, _ = canonical_source(params.source, params.spec)
    k = len(params.spec.parts)
    h_t = -_log2(params.t_vector())
    logm = np.log2(np.asarray(params.spec.bins, dtype=float))
    member = p > 0
    for S in _nonempty_subsets(k):
        h_p = -_log2(_marginal_over(p, S, k))
        with np.errstate(invalid="ignore"):
            ok = h_p - h_t - logm[list(S)].sum() > params.gamma
        member &= np.broadcast_to(ok, p.shape)
    return member


def sgamma1_membership(params: SGamma1Params, x_v: Sequence[int], z=0) -> bool:
    _, z_axes = canonical_source(params.source, params.spec)
    return bool(sgamma1_table(params)[tuple(x_v) + (_z_index(z, z_axes),)])


def thm1_additive_term(n_parts: int, gamma: float, exponent: str = "tight") -> float:
    """2^((|V| - gamma)/2 - 1), or the 2^((|V| - 1 - gamma)/2) spelling with ``exponent="loose"``."""
    if exponent == "tight":
        return 2.0 ** ((n_parts - gamma) / 2 - 1)
    if exponent == "loose":
        return 2.0 ** ((n_parts - 1 - gamma) / 2)
    raise ValueError("exponent must be 'tight' or 'loose'")


def thm1_bound(params: SGamma1Params, exponent: str = "tight") -> float:
    """p(complement of the approximation set) + the additive gamma term."""
    p, _ = canonical_source(params.source, params.spec)
    if p.size > ENUMERATION_GUARD:
        raise GuardError(f"product alphabet of {p.size} cells exceeds {ENUMERATION_GUARD}")
    outside = float(p[~sgamma1_table(params)].sum())
    return outside + thm1_additive_term(len(params.spec.parts), params.gamma, exponent)


def variance_diagnostic_table(params: SGamma1Params, guard: int = ENUMERATION_GUARD) -> tuple[np.ndarray, np.ndarray]:
    """Exact variance of the restricted induced mass for every (b, z), and its bound.

    Both arrays have shape (total_bins, |Z|).
    """
    p, _ = canonical_source(params.source, params.spec)
    spec = params.spec
    restricted = np.where(sgamma1_table(params), p, 0.0)
    s1 = np.zeros((spec.total_bins, p.shape[-1]))
    s2 = np.zeros_like(s1)
    for maps in iter_all_assignments(spec, guard):
        P = _induced_batch(restricted, spec, maps)
        s1 += P.sum(axis=0)
        s2 += (P**2).sum(axis=0)
    count = spec.assignment_count()
    mean = s1 / count
    var = np.maximum(s2 / count - mean**2, 0.0)
    pz = p.reshape(-1, p.shape[-1]).sum(axis=0)
    tz = params.t_vector()
    k = len(spec.parts)
    bound = np.broadcast_to(spec.total_bins**-2.0 * 2.0 ** (k - params.gamma) * pz * tz, var.shape)
    return var, np.array(bound)


def variance_diagnostic(params: SGamma1Params, z, b_v: Sequence[int]) -> tuple[float, float]:
    """(exact variance over assignments, analytic bound) at one (z, b_V)."""
    _, z_axes = canonical_source(params.source, params.spec)
    var, bound = variance_diagnostic_table(params)
    b = int(np.ravel_multi_index(tuple(b_v), params.spec.bins))
    zi = _z_index(z, z_axes)
    return float(var[b, zi]), float(bound[b, zi])


def expected_induced_table(source: JointPmf, spec: BinningSpec, guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """Average of P(b, z) over all assignments; shape (total_bins, |Z|)."""
    p, _ = canonical_source(source, spec)
    acc = np.zeros((spec.total_bins, p.shape[-1]))
    for maps in iter_all_assignments(spec, guard):
        acc += _induced_batch(p, spec, maps).sum(axis=0)
    return acc / spec.assignment_count()
