"""n-types, exact type-class sizes and uniform sampling from a type class."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .prob import Pmf


@dataclass(frozen=True)
class NType:
    n: int
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if any(c < 0 for c in counts):
            raise ValueError(f"negative count in {counts}")
        if sum(counts) != self.n:
            raise ValueError(f"counts {counts} do not sum to n={self.n}")

    @property
    def probs(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n

    def as_pmf(self, name: str = "X") -> Pmf:
        return Pmf(self.probs, name, validate=False)

    def to_json(self) -> dict:
        return {"n": self.n, "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj) -> "NType":
        return cls(int(obj["n"]), tuple(obj["counts"]))


def nearest_ntype(q, n: int) -> NType:
    """n-type within 1/n of ``q`` in the sup norm.

    Floors ``n * q`` and hands the leftover units to the largest fractional
    remainders (ties go to the lower symbol index).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    q = np.asarray(q.probs if isinstance(q, Pmf) else q, dtype=float)
    scaled = n * q
    base = np.floor(scaled).astype(np.int64)
    # guard against round-off pushing floor over n
    while base.sum() > n:
        base[np.argmax(base - scaled)] -= 1
    left = n - int(base.sum())
    frac = scaled - base
    order = np.lexsort((np.arange(q.size), -frac))
    base[order[:left]] += 1
    return NType(n, tuple(int(c) for c in base))


def type_class_log_size(t: NType) -> float:
    """log2 of the multinomial coefficient n! / prod(counts!)."""
    lg = math.lgamma(t.n + 1) - sum(math.lgamma(c + 1) for c in t.counts)
    return lg / math.log(2)


def type_log_mass(t: NType) -> float:
    """-log2 of the probability of any member under the uniform distribution on the type class."""
    return type_class_log_size(t)


def type_entropy(t: NType) -> float:
    p = t.probs[t.probs > 0]
    return float(-(p * np.log2(p)).sum())


def type_constant_L(alphabet_size: int) -> float:
    """Constant L with log|T| >= n H(type) - L log2 n; the counting-bound value |X| - 1."""
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be >= 1")
    return float(alphabet_size - 1)


def sample_from_type(t: NType, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the type class: a random shuffle of the multiset of symbols.

    Returns shape ``(n,)`` or ``(size, n)``.
    """
    base = np.repeat(np.arange(len(t.counts)), t.counts)
    if size is None:
        return rng.permutation(base)
    tiled = np.broadcast_to(base, (size, t.n)).copy()
    return rng.permuted(tiled, axis=1)


def sequence_type(seq, alphabet_size: int) -> NType:
    seq = np.asarray(seq)
    return NType(seq.size, tuple(np.bincount(seq, minlength=alphabet_size)))


def enumerate_type_class(t: NType, limit: int = 2**20) -> np.ndarray:
    """All members of the type class in lexicographic order, shape (|T|, n)."""
    size = 2.0 ** type_class_log_size(t)
    if size > limit * (1 + 1e-9):
        raise MemoryError(f"type class holds about {size:.3g} sequences (limit {limit})")
    rows = [np.full(t.n, -1, dtype=np.int64)]
    for sym, c in enumerate(t.counts):
        nxt = []
        for row in rows:
            free = np.flatnonzero(row < 0)
            for pos in itertools.combinations(free, c):
                r = row.copy()
                r[list(pos)] = sym
                nxt.append(r)
        rows = nxt
    out = np.array(rows)
    return out[np.lexsort(out.T[::-1])]


@dataclass(frozen=True)
class TypeClassDist:
    """Uniform distribution over the type class of ``ntype``."""

    ntype: NType

    def log_mass(self, seq) -> float:
        """-log2 of the mass of ``seq``: log2|T| for members, ``inf`` otherwise."""
        seq = np.asarray(seq)
        k = len(self.ntype.counts)
        if seq.size != self.ntype.n or seq.min(initial=0) < 0 or seq.max(initial=0) >= k:
            return math.inf
        if sequence_type(seq, k) != self.ntype:
            return math.inf
        return type_class_log_size(self.ntype)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return sample_from_type(self.ntype, rng, size)
