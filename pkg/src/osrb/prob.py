"""Finite discrete probability objects and the information measures built on them.

All logarithms are base 2. Tables are dense numpy arrays; every object is
treated as immutable after construction (the underlying arrays are marked
read-only).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12
PSD_TOL = 1e-10
# Cells materialised by iid_extend before it refuses.
MAX_CELLS = 2**24


class PmfError(ValueError):
    """Invalid probability table. ``index`` points at the offending entry when known."""

    def __init__(self, message: str, index=None):
        super().__init__(message if index is None else f"{message} (at index {index})")
        self.detail = message
        self.index = index


@dataclass(frozen=True)
class Alphabet:
    name: str
    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError(f"alphabet {self.name!r} must have size >= 1, got {self.size}")


def _check_table(probs: np.ndarray) -> None:
    if not np.all(np.isfinite(probs)):
        bad = np.argwhere(~np.isfinite(probs))[0]
        raise PmfError("non-finite probability", tuple(int(i) for i in bad))
    if np.any(probs < 0):
        bad = np.argwhere(probs < 0)[0]
        raise PmfError("negative probability", tuple(int(i) for i in bad))
    total = float(probs.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise PmfError(f"probabilities sum to {total!r}, expected 1 within {NORMALIZATION_TOL}")


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense pmf over the product of named alphabets.

    Parameters
    ----------
    axes : sequence of Alphabet
        One alphabet per table dimension; labels must be unique.
    probs : array_like
        Table of shape ``tuple(a.size for a in axes)``.
    """

    axes: tuple[Alphabet, ...]
    probs: np.ndarray = field(repr=False)

    def __init__(self, axes: Sequence[Alphabet], probs, *, validate: bool = True):
        axes = tuple(axes)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"axis labels must be unique, got {names}")
        probs = _frozen(probs)
        shape = tuple(a.size for a in axes)
        if probs.shape != shape:
            raise ValueError(f"table shape {probs.shape} does not match alphabets {shape}")
        if validate:
            _check_table(probs)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_array(cls, probs, names: Sequence[str] | None = None) -> "JointPmf":
        probs = np.asarray(probs, dtype=float)
        if names is None:
            names = [f"X{i}" for i in range(probs.ndim)]
        return cls([Alphabet(n, s) for n, s in zip(names, probs.shape)], probs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probs.shape

    def axis_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown axis label {name!r}; axes are {self.names}") from None

    def alphabet(self, name: str) -> Alphabet:
        return self.axes[self.axis_index(name)]

    def point_index(self, point) -> tuple[int, ...]:
        """Turn a full point (mapping label -> symbol, or tuple in axis order) into an index."""
        if isinstance(point, Mapping):
            missing = set(self.names) - set(point)
            if missing:
                raise KeyError(f"point is missing axes {sorted(missing)}")
            return tuple(int(point[n]) for n in self.names)
        point = tuple(int(s) for s in point)
        if len(point) != len(self.axes):
            raise ValueError(f"point has {len(point)} coordinates, table has {len(self.axes)} axes")
        return point

    def __call__(self, point) -> float:
        return float(self.probs[self.point_index(point)])

    def renamed(self, mapping: Mapping[str, str]) -> "JointPmf":
        axes = [Alphabet(mapping.get(a.name, a.name), a.size) for a in self.axes]
        return JointPmf(axes, self.probs, validate=False)

    def transpose(self, order: Sequence[str]) -> "JointPmf":
        idx = [self.axis_index(n) for n in order]
        if sorted(idx) != list(range(len(self.axes))):
            raise ValueError(f"order {list(order)} is not a permutation of {self.names}")
        return JointPmf([self.axes[i] for i in idx], np.transpose(self.probs, idx), validate=False)

    def to_json(self) -> dict:
        return {
            "axis_names": list(self.names),
            "axis_sizes": [a.size for a in self.axes],
            "probs": self.probs.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "JointPmf":
        try:
            sizes = [int(s) for s in obj["axis_sizes"]]
            flat = np.asarray(obj["probs"], dtype=float)
        except KeyError as exc:
            raise PmfError(f"joint pmf JSON is missing field {exc.args[0]!r}") from None
        if flat.ndim != 1 or flat.size != int(np.prod(sizes)):
            raise PmfError(f"expected {int(np.prod(sizes))} flat probabilities, got {flat.size}")
        for i, v in enumerate(flat):
            if not np.isfinite(v) or v < 0:
                raise PmfError("invalid probability", i)
        names = obj.get("axis_names") or [f"X{i}" for i in range(len(sizes))]
        return cls([Alphabet(n, s) for n, s in zip(names, sizes)], flat.reshape(sizes))


class Pmf(JointPmf):
    """Single-axis pmf."""

    def __init__(self, probs, name: str = "X", *, validate: bool = True):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1:
            raise ValueError("Pmf takes a 1-D vector of probabilities")
        super().__init__([Alphabet(name, probs.size)], probs, validate=validate)

    @property
    def name(self) -> str:
        return self.axes[0].name

    @property
    def size(self) -> int:
        return self.axes[0].size

    @classmethod
    def uniform(cls, size: int, name: str = "X") -> "Pmf":
        return cls(np.full(size, 1.0 / size), name)

    @classmethod
    def point_mass(cls, size: int, symbol: int, name: str = "X") -> "Pmf":
        p = np.zeros(size)
        p[symbol] = 1.0
        return cls(p, name)


def as_pmf(joint: JointPmf) -> Pmf:
    if len(joint.axes) != 1:
        raise ValueError(f"expected a single-axis table, got axes {joint.names}")
    return Pmf(joint.probs, joint.axes[0].name, validate=False)


def _labels(keep) -> list[str]:
    return [keep] if isinstance(keep, str) else list(keep)


def marginalize(joint: JointPmf, keep) -> JointPmf:
    """Sum out every axis not in ``keep``; remaining axes keep their original order."""
    keep = _labels(keep)
    for name in keep:
        joint.axis_index(name)
    kept = [i for i, n in enumerate(joint.names) if n in keep]
    drop = tuple(i for i in range(len(joint.axes)) if i not in kept)
    probs = joint.probs.sum(axis=drop) if drop else joint.probs
    return JointPmf([joint.axes[i] for i in kept], probs, validate=False)


def _sub_index(joint: JointPmf, point: Mapping[str, int], labels: Sequence[str]):
    return tuple(int(point[n]) for n in labels)


def _ordered(joint: JointPmf, labels) -> list[str]:
    labels = set(_labels(labels))
    for n in labels:
        joint.axis_index(n)
    return [n for n in joint.names if n in labels]


def condition(joint: JointPmf, target, given: Mapping[str, int]) -> JointPmf:
    """Conditional pmf of the ``target`` axes given the point ``given``.

    Returns a :class:`Pmf` when ``target`` is a single axis.
    """
    target = _ordered(joint, target)
    gnames = _ordered(joint, list(given))
    if set(target) & set(gnames):
        raise ValueError("target and conditioning axes overlap")
    sub = marginalize(joint, target + gnames).transpose(target + gnames)
    table = sub.probs[(Ellipsis,) + _sub_index(joint, given, gnames)] if gnames else sub.probs
    mass = float(table.sum())
    if mass <= 0:
        raise ZeroDivisionError(f"conditioning point {dict(given)} has zero probability")
    table = table / mass
    if len(target) == 1:
        return Pmf(table, target[0], validate=False)
    return JointPmf([joint.alphabet(n) for n in target], table, validate=False)


def iid_extend(joint: JointPmf, n: int) -> JointPmf:
    """n-fold product pmf. Axis ``A`` becomes ``A_1 .. A_n`` (letter-major order)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cells = int(np.prod(joint.shape)) ** n
    if cells > MAX_CELLS:
        raise MemoryError(f"product table would have {cells} cells (> {MAX_CELLS}); use iid_mass")
    table = joint.probs
    out = table
    for _ in range(n - 1):
        out = np.multiply.outer(out, table)
    axes = [Alphabet(f"{a.name}_{i + 1}", a.size) for i in range(n) for a in joint.axes]
    return JointPmf(axes, out, validate=False)


def iid_mass(joint: JointPmf, sequence) -> float:
    """Mass of a sequence of per-letter points under the product pmf, without materialising it."""
    out = 1.0
    for point in sequence:
        out *= joint(point)
    return out


def _log2(x):
    with np.errstate(divide="ignore"):
        return np.log2(x)


def conditional_information(joint: JointPmf, x: Mapping[str, int], y: Mapping[str, int] | None = None) -> float:
    """log2(1 / p(x|y)); ``inf`` when p(x|y) = 0. With ``y`` empty it is log2(1/p(x))."""
    y = dict(y or {})
    xn, yn = _ordered(joint, list(x)), _ordered(joint, list(y))
    if set(xn) & set(yn):
        raise ValueError("x and y axes overlap")
    p_xy = marginalize(joint, xn + yn)(dict(x) | y)
    p_y = marginalize(joint, yn)(y) if yn else 1.0
    if p_y <= 0:
        raise ZeroDivisionError(f"conditioning point {y} has zero probability")
    if p_xy <= 0:
        return float("inf")
    return float(-np.log2(p_xy / p_y))


def information_density(joint: JointPmf, x: Mapping[str, int], y: Mapping[str, int]) -> float:
    """log2 p(x,y)/(p(x)p(y)); ``-inf`` when p(x,y) = 0."""
    xn, yn = _ordered(joint, list(x)), _ordered(joint, list(y))
    if set(xn) & set(yn):
        raise ValueError("x and y axes overlap")
    p_x = marginalize(joint, xn)(x)
    p_y = marginalize(joint, yn)(y)
    if p_x <= 0 or p_y <= 0:
        raise ZeroDivisionError("information density needs positive marginals")
    p_xy = marginalize(joint, xn + yn)(dict(x) | dict(y))
    if p_xy <= 0:
        return float("-inf")
    return float(np.log2(p_xy / (p_x * p_y)))


def _table_over(joint: JointPmf, labels: Sequence[str]) -> np.ndarray:
    """Marginal of ``labels`` broadcast back to the full table shape."""
    keep = set(labels)
    drop = tuple(i for i, n in enumerate(joint.names) if n not in keep)
    return joint.probs.sum(axis=drop, keepdims=True) if drop else joint.probs


def entropy(joint: JointPmf, target, given=()) -> float:
    """Shannon entropy H(target | given) in bits, with 0 log 0 = 0."""
    target = _ordered(joint, target)
    given = _ordered(joint, given) if given else []
    if set(target) & set(given):
        raise ValueError("target and given axes overlap")
    p_tg = _table_over(joint, target + given)
    p_g = _table_over(joint, given) if given else np.ones_like(p_tg)
    full = np.broadcast_to(joint.probs, joint.shape)
    mask = full > 0
    ratio = np.broadcast_to(p_tg, joint.shape)[mask] / np.broadcast_to(p_g, joint.shape)[mask]
    return float(-(full[mask] * np.log2(ratio)).sum())


def mutual_information(joint: JointPmf, a, b, given=()) -> float:
    a, b = _labels(a), _labels(b)
    given = _labels(given) if given else []
    return entropy(joint, a, given) - entropy(joint, a, list(b) + given)


def total_variation(p: JointPmf, q: JointPmf) -> float:
    """Half the L1 distance between two tables on the same axes."""
    if p.shape != q.shape or p.names != q.names:
        raise ValueError(f"axis mismatch: {p.names}{p.shape} vs {q.names}{q.shape}")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


@dataclass(frozen=True, eq=False)
class Channel:
    """Conditional pmf of the output tuple given a single input symbol.

    ``rows`` has shape ``(input.size, *[o.size for o in outputs])``.
    """

    input: Alphabet
    outputs: tuple[Alphabet, ...]
    rows: np.ndarray = field(repr=False)

    def __init__(self, rows, input: Alphabet | str = "X", outputs: Sequence[Alphabet | str] | None = None):
        rows = _frozen(rows)
        if rows.ndim < 2:
            raise ValueError("channel rows need shape (inputs, outputs...)")
        if isinstance(input, str):
            input = Alphabet(input, rows.shape[0])
        if outputs is None:
            outputs = ["Y"] if rows.ndim == 2 else [f"Y{i + 1}" for i in range(rows.ndim - 1)]
        outputs = tuple(
            Alphabet(o, s) if isinstance(o, str) else o for o, s in zip(outputs, rows.shape[1:])
        )
        if rows.shape != (input.size,) + tuple(o.size for o in outputs):
            raise ValueError(f"rows shape {rows.shape} does not match alphabets")
        for x in range(input.size):
            try:
                _check_table(rows[x])
            except PmfError as exc:
                raise PmfError(f"channel row {x}: {exc.detail}", (x,) + (exc.index or ())) from None
        object.__setattr__(self, "input", input)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def bsc(cls, crossover: float, input: str = "X", output: str = "Y") -> "Channel":
        e = float(crossover)
        return cls([[1 - e, e], [e, 1 - e]], input, [output])

    @classmethod
    def noiseless(cls, size: int, input: str = "X", output: str = "Y") -> "Channel":
        return cls(np.eye(size), input, [output])

    @classmethod
    def deterministic(cls, mapping: Sequence[int], out_size: int, input: str = "X", output: str = "Y") -> "Channel":
        rows = np.zeros((len(mapping), out_size))
        rows[np.arange(len(mapping)), list(mapping)] = 1.0
        return cls(rows, input, [output])

    @classmethod
    def product(cls, *channels: "Channel", input: str = "X") -> "Channel":
        """Channel whose input is the tuple of the factors' inputs (flattened row-major)."""
        rows = channels[0].rows
        outs = list(channels[0].outputs)
        for ch in channels[1:]:
            k1, k2 = rows.shape[0], ch.rows.shape[0]
            o1, o2 = rows.shape[1:], ch.rows.shape[1:]
            rows = np.einsum(
                rows.reshape(k1, -1), [0, 2], ch.rows.reshape(k2, -1), [1, 3], [0, 1, 2, 3]
            ).reshape((k1 * k2,) + o1 + o2)
            outs += list(ch.outputs)
        return cls(rows, input, outs)

    @classmethod
    def broadcast(cls, *channels: "Channel", outputs: Sequence[str] | None = None) -> "Channel":
        """One input feeding conditionally independent outputs, one per factor channel."""
        k = channels[0].input.size
        rows = np.ones((k,))
        for ch in channels:
            if ch.input.size != k or len(ch.outputs) != 1:
                raise ValueError("factors must share the input alphabet and have one output each")
            rows = rows[..., None] * ch.rows.reshape((k,) + (1,) * (rows.ndim - 1) + (-1,))
        if outputs is None:
            outputs = [f"Y{i + 1}" for i in range(len(channels))]
        return cls(rows, channels[0].input, list(outputs))

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(o.name for o in self.outputs)

    def joint(self, input_pmf: JointPmf) -> JointPmf:
        """Attach the channel to ``input_pmf`` (which must contain the input axis)."""
        ax = input_pmf.axis_index(self.input.name)
        if input_pmf.axes[ax].size != self.input.size:
            raise ValueError("input alphabet size mismatch")
        p = input_pmf.probs
        nd = p.ndim
        k = len(self.outputs)
        # broadcast rows along all other input axes
        rows_shape = [1] * nd + list(self.rows.shape[1:])
        rows_shape[ax] = self.input.size
        rows = self.rows.reshape(rows_shape)
        table = p.reshape(p.shape + (1,) * k) * rows
        return JointPmf(list(input_pmf.axes) + list(self.outputs), table, validate=False)

    def marginal(self, output: str) -> "Channel":
        i = self.output_names.index(output)
        drop = tuple(1 + j for j in range(len(self.outputs)) if j != i)
        return Channel(self.rows.sum(axis=drop), self.input, [self.outputs[i]])

    def to_json(self) -> dict:
        k = self.input.size
        return {
            "input_size": k,
            "output_sizes": [o.size for o in self.outputs],
            "rows": self.rows.reshape(k, -1).tolist(),
        }

    @classmethod
    def from_json(cls, obj: Mapping, input: str = "X", outputs: Sequence[str] | None = None) -> "Channel":
        try:
            k = int(obj["input_size"])
            sizes = [int(s) for s in obj["output_sizes"]]
            rows = obj["rows"]
        except KeyError as exc:
            raise PmfError(f"channel JSON is missing field {exc.args[0]!r}") from None
        width = int(np.prod(sizes))
        if len(rows) != k:
            raise PmfError(f"expected {k} rows, got {len(rows)}")
        for x, row in enumerate(rows):
            if len(row) != width:
                raise PmfError(f"row {x} has {len(row)} entries, expected {width}", (x,))
            for j, v in enumerate(row):
                if not np.isfinite(v) or v < 0:
                    raise PmfError("invalid probability", (x, j))
        arr = np.asarray(rows, dtype=float).reshape([k] + sizes)
        if outputs is None:
            outputs = ["Y"] if len(sizes) == 1 else [f"Y{i + 1}" for i in range(len(sizes))]
        return cls(arr, input, list(outputs))


def _density_table(joint: JointPmf, a: Sequence[str], b: Sequence[str]) -> np.ndarray:
    """ı(a;b) broadcast to the full table; cells with p(a,b) = 0 hold 0 (they carry no mass)."""
    p_ab = np.broadcast_to(_table_over(joint, list(a) + list(b)), joint.shape)
    p_a = np.broadcast_to(_table_over(joint, a), joint.shape)
    p_b = np.broadcast_to(_table_over(joint, b), joint.shape)
    out = np.zeros(joint.shape)
    mask = p_ab > 0
    out[mask] = np.log2(p_ab[mask]) - np.log2(p_a[mask]) - np.log2(p_b[mask])
    return out


def _conditional_moments(joint: JointPmf, values: Sequence[np.ndarray], cond: Sequence[str]):
    """E over ``cond`` of the conditional covariance of ``values`` (full-shape tables)."""
    p = joint.probs
    cax = tuple(joint.axis_index(n) for n in cond)
    other = tuple(i for i in range(p.ndim) if i not in cax)
    p_c = p.sum(axis=other, keepdims=True) if other else p
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(p_c > 0, p / np.where(p_c > 0, p_c, 1.0), 0.0)
    means = [(w * v).sum(axis=other, keepdims=True) for v in values]
    k = len(values)
    cov = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            c = (w * (values[i] - means[i]) * (values[j] - means[j])).sum(axis=other, keepdims=True)
            cov[i, j] = cov[j, i] = float((p_c * c).sum())
    return cov


def channel_dispersion(input: JointPmf, ch: Channel) -> float:
    """E_X Var_{Y|X}[ı(X;Y) | X] in bits^2 for the joint ``input x ch``."""
    if len(ch.outputs) != 1:
        raise ValueError("channel_dispersion takes a single-output channel")
    joint = ch.joint(input)
    x, y = ch.input.name, ch.outputs[0].name
    dens = _density_table(joint, [x], [y])
    return max(0.0, float(_conditional_moments(joint, [dens], [x])[0, 0]))


@dataclass(frozen=True, eq=False)
class CovMatrix2:
    entries: np.ndarray

    def __init__(self, entries):
        m = _frozen(entries)
        if m.shape != (2, 2):
            raise ValueError("CovMatrix2 needs a 2x2 matrix")
        if abs(m[0, 1] - m[1, 0]) > PSD_TOL:
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(m).min() < -PSD_TOL:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def bc_covariance(q_u1u2x: JointPmf, ch: Channel, u_axes: Sequence[str] = ("U1", "U2")) -> CovMatrix2:
    """E_{U1U2} Cov_{Y1Y2|U1U2}[(ı(U1;Y1), ı(U2;Y2)) | U1 U2] for a two-output channel."""
    if len(ch.outputs) != 2:
        raise ValueError("broadcast covariance needs a channel with two outputs")
    joint = ch.joint(q_u1u2x)
    u1, u2 = u_axes
    y1, y2 = ch.output_names
    d1 = _density_table(joint, [u1], [y1])
    d2 = _density_table(joint, [u2], [y2])
    cov = _conditional_moments(joint, [d1, d2], [u1, u2])
    cov = 0.5 * (cov + cov.T)
    # clip round-off below zero on the diagonal
    cov[np.diag_indices(2)] = np.maximum(np.diag(cov), 0.0)
    return CovMatrix2(cov)


def wiretap_variances(
    q_ux: JointPmf,
    ch: Channel,
    u_axis: str = "U",
    conditioning: str = "ux",
) -> tuple[float, float]:
    """Conditional variances of ı(U;Y) and ı(U;Z) for a wiretap channel with outputs (Y, Z).

    ``conditioning="ux"`` takes the variance given (U, X), which coincides with
    the point-to-point dispersion when U = X. ``conditioning="u"`` conditions on U
    alone, so the randomness of X given U also contributes.
    """
    if len(ch.outputs) != 2:
        raise ValueError("wiretap channel needs outputs (Y, Z)")
    if conditioning not in ("ux", "u"):
        raise ValueError("conditioning must be 'ux' or 'u'")
    joint = ch.joint(q_ux)
    cond = [u_axis] if conditioning == "u" or u_axis == ch.input.name else [u_axis, ch.input.name]
    out = []
    for y in ch.output_names:
        dens = _density_table(joint, [u_axis], [y])
        out.append(max(0.0, float(_conditional_moments(joint, [dens], cond)[0, 0])))
    return out[0], out[1]

