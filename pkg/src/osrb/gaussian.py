"""Gaussian tail machinery: Q and its inverse, orthant probabilities, the
complementary multivariate quantile region, and Berry-Esseen radii."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats
from scipy.stats import qmc

from .prob import PSD_TOL

BERRY_ESSEEN_C0 = 0.5600
# No explicit constant accompanies the multivariate CLT; this one is deliberately loose.
MULTIVARIATE_BE_CONSTANT = 42.0
BOUNDARY_TOL = 1e-6
ANCHOR_QUANTILE = 1e-3


def std_q(x):
    """Gaussian upper tail Q(x) = P(N(0,1) > x)."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def std_q_inv(eps):
    """Inverse of :func:`std_q` on (0, 1)."""
    e = np.asarray(eps, dtype=float)
    if np.any((e <= 0) | (e >= 1)) or np.any(np.isnan(e)):
        raise ValueError(f"std_q_inv needs eps in (0, 1), got {eps}")
    out = -special.ndtri(e)
    return float(out) if np.ndim(out) == 0 else out


def _bvn_standard(h, k, rho):
    """P(X <= h, Y <= k) for standard margins and correlation rho (vectorised over h, k)."""
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    if rho >= 1.0 - 1e-14:
        return special.ndtr(np.minimum(h, k))
    if rho <= -1.0 + 1e-14:
        return np.maximum(special.ndtr(h) - special.ndtr(-k), 0.0)
    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ah = (k - rho * h) / (h * s)
        ak = (h - rho * k) / (k * s)
        # h = 0 or k = 0: Owen's T only needs the sign of the infinite slope
        ah = np.where(h == 0, np.copysign(np.inf, k - rho * h), ah)
        ak = np.where(k == 0, np.copysign(np.inf, h - rho * k), ak)
    # sign product, since h * k can underflow to zero
    hk = np.sign(h) * np.sign(k)
    beta = np.where((hk > 0) | ((hk == 0) & (h + k >= 0)), 0.0, 0.5)
    out = (
        0.5 * special.ndtr(h)
        + 0.5 * special.ndtr(k)
        - special.owens_t(np.where(np.isinf(h), 0.0, h), np.nan_to_num(ah, nan=0.0))
        * np.isfinite(h)
        - special.owens_t(np.where(np.isinf(k), 0.0, k), np.nan_to_num(ak, nan=0.0))
        * np.isfinite(k)
        - beta
    )
    both0 = (h == 0) & (k == 0)
    out = np.where(both0, 0.25 + math.asin(rho) / (2 * math.pi), out)
    # infinite limits
    out = np.where(np.isposinf(h), special.ndtr(k), out)
    out = np.where(np.isposinf(k), special.ndtr(h), out)
    out = np.where(np.isneginf(h) | np.isneginf(k), 0.0, out)
    return np.clip(out, 0.0, 1.0)


def _trivariate_qmc(b, cov, points: int, seed: int, replicates: int = 8):
    """Separation-of-variables estimate of P(X <= b), X ~ N(0, cov), 3-D. Returns (value, stderr)."""
    L = np.linalg.cholesky(cov + 1e-13 * np.eye(3))
    estimates = []
    for r in range(replicates):
        w = qmc.Sobol(d=2, scramble=True, seed=seed + r).random(points)
        e1 = special.ndtr(b[0] / L[0, 0])
        y1 = special.ndtri(np.clip(w[:, 0] * e1, 1e-300, 1 - 1e-16))
        e2 = special.ndtr((b[1] - L[1, 0] * y1) / L[1, 1])
        y2 = special.ndtri(np.clip(w[:, 1] * e2, 1e-300, 1 - 1e-16))
        e3 = special.ndtr((b[2] - L[2, 0] * y1 - L[2, 1] * y2) / L[2, 2])
        estimates.append(float(np.mean(e1 * e2 * e3)))
    est = np.asarray(estimates)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(replicates))


def mvn_lower_orthant(mean, cov, x, *, qmc_points: int = 2**14, qmc_seed: int = 0, return_error: bool = False):
    """P(X <= x componentwise) for X ~ N(mean, cov), dimension <= 3.

    Zero-variance coordinates are treated as constants at their mean. In two
    dimensions ``x`` may carry leading batch axes (shape ``(..., 2)``).
    Three dimensions use randomised quasi-Monte Carlo on the Sobol points
    generated from ``qmc_seed``; pass ``return_error=True`` to get the
    standard error as well.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.size
    if d > 3:
        raise ValueError("mvn_lower_orthant supports dimension <= 3")
    if cov.shape != (d, d):
        raise ValueError(f"covariance shape {cov.shape} does not match mean of length {d}")
    if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -PSD_TOL:
        raise ValueError("covariance is not positive semidefinite")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ValueError(f"x has trailing dimension {x.shape[-1]}, expected {d}")
    z = x - mean
    var = np.clip(np.diag(cov), 0.0, None)
    live = var > PSD_TOL
    factor = np.all(z[..., ~live] >= 0, axis=-1).astype(float) if (~live).any() else np.ones(z.shape[:-1])
    idx = np.flatnonzero(live)
    err = 0.0
    if idx.size == 0:
        val = factor
    elif idx.size == 1:
        val = factor * special.ndtr(z[..., idx[0]] / math.sqrt(var[idx[0]]))
    elif idx.size == 2:
        i, j = idx
        si, sj = math.sqrt(var[i]), math.sqrt(var[j])
        rho = float(np.clip(cov[i, j] / (si * sj), -1.0, 1.0))
        val = factor * _bvn_standard(z[..., i] / si, z[..., j] / sj, rho)
    else:
        if z.ndim != 1:
            raise ValueError("3-D evaluation takes a single point")
        val, err = _trivariate_qmc(z, cov, qmc_points, qmc_seed)
        val = factor * min(max(val, 0.0), 1.0)
    val = float(val) if np.ndim(val) == 0 else val
    return (val, err) if return_error else val


@dataclass(frozen=True)
class GaussRegionSpec:
    """Region {x : P(N(0, cov) <= x) >= 1 - eps}."""

    cov: np.ndarray
    eps: float

    def __post_init__(self):
        cov = np.array(np.asarray(self.cov, dtype=float), copy=True)
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("cov must be square")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -PSD_TOL:
            raise ValueError("cov must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


def region_probability(spec: GaussRegionSpec, x):
    return mvn_lower_orthant(np.zeros(spec.dim), spec.cov, x)


def region_membership(spec: GaussRegionSpec, x, tol: float = BOUNDARY_TOL):
    """Whether ``x`` lies in the closed region; points within ``tol`` (sup norm) count as members.

    The region is an upper set, so being within ``tol`` of it is the same as
    ``x + tol`` being inside.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match region dimension {spec.dim}")
    p = region_probability(spec, x + tol)
    out = np.asarray(p) >= 1.0 - spec.eps
    return bool(out) if out.ndim == 0 else out


def region_anchor(spec: GaussRegionSpec) -> np.ndarray:
    sd = np.sqrt(np.clip(np.diag(spec.cov), 0.0, None))
    return sd * special.ndtri(ANCHOR_QUANTILE)


class BracketError(RuntimeError):
    pass


def region_boundary(spec: GaussRegionSpec, directions, tol: float = BOUNDARY_TOL, t_max: float = 1e6) -> np.ndarray:
    """Boundary point along each ray ``anchor + t * d`` (d with positive components).

    The anchor is the corner of per-coordinate 1e-3 quantiles. Returned points
    sit on the member side of the boundary, at most ``tol`` along the ray from it.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if dirs.shape[-1] != spec.dim:
        raise ValueError("direction dimension does not match region")
    if np.any(dirs <= 0):
        raise ValueError("directions need strictly positive components")
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    anchor = region_anchor(spec)
    target = 1.0 - spec.eps

    def prob(t):
        pts = anchor + t[:, None] * dirs
        if spec.dim == 2:
            return np.asarray(region_probability(spec, pts))
        return np.array([region_probability(spec, p) for p in pts])

    lo = np.zeros(len(dirs))
    hi = np.ones(len(dirs))
    done = prob(lo) >= target
    hi[done] = 0.0
    while True:
        need = ~done & (prob(hi) < target)
        if not need.any():
            break
        if np.any(hi[need] > t_max):
            raise BracketError(f"no boundary crossing on [0, {t_max}] for some direction")
        lo[need] = hi[need]
        hi[need] *= 2.0
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        inside = prob(mid) >= target
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return anchor + hi[:, None] * dirs


def quadrant_directions(count: int) -> np.ndarray:
    """``count`` unit vectors spread over the open positive quadrant."""
    ang = (np.arange(count) + 0.5) / count * (math.pi / 2)
    return np.column_stack([np.cos(ang), np.sin(ang)])


@dataclass(frozen=True)
class MomentTriple:
    mean: float
    variance: float
    third_abs_central: float

    def __post_init__(self):
        if self.variance < 0 or self.third_abs_central < 0:
            raise ValueError("variance and third absolute moment must be >= 0")

    @classmethod
    def of(cls, values, probs=None) -> "MomentTriple":
        v = np.asarray(values, dtype=float)
        w = np.full(v.size, 1.0 / v.size) if probs is None else np.asarray(probs, dtype=float)
        m = float(w @ v)
        return cls(m, float(w @ (v - m) ** 2), float(w @ np.abs(v - m) ** 3))


def berry_esseen_radius(m: MomentTriple, n: int, constant: float = BERRY_ESSEEN_C0) -> float:
    """Sup-distance bound C * rho / (sigma^3 sqrt(n)) between the normalised sum's CDF and Phi."""
    if m.variance <= 0:
        raise ValueError("Berry-Esseen radius needs positive variance")
    if n < 1:
        raise ValueError("n must be >= 1")
    return constant * m.third_abs_central / (m.variance**1.5 * math.sqrt(n))


def multivariate_berry_esseen_radius(values, probs, n: int, constant: float = MULTIVARIATE_BE_CONSTANT) -> float:
    """Same functional form for vectors: C * E||cov^{-1/2}(X - mu)||^3 / sqrt(n).

    ``values`` has shape (k, d): the support points of one summand.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(probs, dtype=float)
    mu = w @ v
    c = (v - mu).T @ ((v - mu) * w[:, None])
    evals, evecs = np.linalg.eigh(c)
    if evals.min() <= PSD_TOL:
        raise ValueError("multivariate radius needs a nonsingular covariance")
    white = (v - mu) @ evecs / np.sqrt(evals)
    beta = float(w @ np.linalg.norm(white, axis=1) ** 3)
    return constant * beta / math.sqrt(n)


def normal_cdf_sup_distance(samples) -> float:
    """sup_x |F_emp(x) - Phi(x)| of standardised samples, checking both sides of each jump."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    vals, first = np.unique(s, return_index=True)
    last = np.append(first[1:], n)
    cdf = stats.norm.cdf(vals)
    before = first / n
    after = last / n
    return float(max(np.max(np.abs(after - cdf)), np.max(np.abs(before - cdf))))
