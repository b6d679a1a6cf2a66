"""Second-order achievable rates: point-to-point, two-user broadcast (Marton
with private messages) and the wiretap channel under a total-variation
secrecy metric.

Every rate is assembled from the same ingredients: an n-type input
distribution, the approximation step with gamma = log2 n, the decoding step
with gamma = 1/2 log2 n, and a normal approximation for the information
spectrum. Second-order terms enter as ``-sqrt(V / n) * Q^{-1}(eps)`` at the
per-use scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import gaussian
from .prob import Channel, JointPmf, Pmf, as_pmf, bc_covariance, entropy, marginalize, mutual_information, wiretap_variances
from .typeclass import NType, nearest_ntype, type_constant_L, type_entropy


class BudgetError(ValueError):
    """The error budget left after the 1/sqrt(n) slack is empty."""


@dataclass(frozen=True)
class LogTermPolicy:
    """Bookkeeping for the O(log n) terms and the error-budget split.

    Attributes
    ----------
    type_constant : float or None
        L in log|T| >= n H - L log2 n. ``None`` uses (support size - 1) of the
        type's pmf.
    gamma_apx, gamma_dec : float
        Multipliers of log2 n used as gamma in the approximation and decoding steps.
    strict_margin : float
        Extra log2 n that turns the approximation-set inequality strict.
    eps_slack : float
        Multiplier s of 1/sqrt(n) removed from the error budget before inverting Q
        (s = 1 reproduces ``eps - 1/sqrt(n)``; the default keeps eps intact).
    c_multiplier : float or None
        Constant c of the ``c log2(n) / n`` tolerance that bounds the total
        log-term budget. ``None`` gives L + gamma_apx + strict_margin + ceil(gamma_dec).
    dispersion_conditioning : {"ux", "u"}
        Conditioning used for the wiretap variances.
    """

    type_constant: float | None = None
    gamma_apx: float = 1.0
    gamma_dec: float = 0.5
    strict_margin: float = 1.0
    eps_slack: float = 0.0
    c_multiplier: float | None = None
    dispersion_conditioning: str = "ux"

    def type_log_constant(self, pmf) -> float:
        if self.type_constant is not None:
            return float(self.type_constant)
        probs = np.asarray(pmf.probs if isinstance(pmf, JointPmf) else pmf)
        return type_constant_L(int(np.count_nonzero(probs > 0)))

    def encoder_constant(self, pmf) -> float:
        return self.type_log_constant(pmf) + self.gamma_apx + self.strict_margin

    def total_log_constant(self, pmf) -> float:
        if self.c_multiplier is not None:
            return float(self.c_multiplier)
        return self.encoder_constant(pmf) + math.ceil(self.gamma_dec)

    def budget(self, eps: float, n: int, factor: float = 1.0) -> float:
        e = eps - factor * self.eps_slack / math.sqrt(n)
        if not 0 < e < 1:
            raise BudgetError(f"error budget {eps} leaves {e} after the 1/sqrt(n) slack at n={n}")
        return e

    def to_json(self) -> dict:
        return asdict(self)


DEFAULT_POLICY = LogTermPolicy()


def _check_n_eps(n: int, eps: float, label: str = "eps"):
    if int(n) < 2:
        raise ValueError("blocklength n must be >= 2")
    if not 0 < eps < 1:
        raise ValueError(f"{label} must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class P2PSetup:
    input: Pmf
    channel: Channel
    n: int
    eps: float

    def __post_init__(self):
        _check_n_eps(self.n, self.eps)
        if len(self.channel.outputs) != 1:
            raise ValueError("point-to-point channel needs a single output")
        if self.input.size != self.channel.input.size:
            raise ValueError("input pmf and channel input alphabet differ in size")
        if self.input.name != self.channel.input.name:
            object.__setattr__(self, "input", Pmf(self.input.probs, self.channel.input.name, validate=False))


def _letter_terms(input: Pmf, ch: Channel) -> tuple[np.ndarray, np.ndarray]:
    """Per input symbol x: E[h_q(x|Y) | x] and Var[ı_q(x;Y) | x] under q = input x channel."""
    W = ch.rows.reshape(ch.input.size, -1)
    q = input.probs
    joint = q[:, None] * W
    qy = joint.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(joint > 0, -np.log2(joint / qy[None, :]), 0.0)
    mean = (W * h).sum(axis=1)
    var = (W * (h - mean[:, None]) ** 2).sum(axis=1)
    return mean, np.maximum(var, 0.0)


@dataclass
class RateReport:
    """Decomposition of a computed rate (bits per channel use unless noted)."""

    rate: float
    dispersion_term: float
    log_term: float
    clamped: bool = False
    components: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "rate": self.rate,
            "dispersion_term": self.dispersion_term,
            "log_term": self.log_term,
            "clamped": self.clamped,
            "components": self.components,
        }


def _p2p_pieces(setup: P2PSetup, policy: LogTermPolicy):
    n = setup.n
    ntype = nearest_ntype(setup.input, n)
    mean, var = _letter_terms(setup.input, setup.channel)
    w = ntype.probs
    cond_ent = float(w @ mean)
    disp = float(w @ var)
    eps_dec = policy.budget(setup.eps, n)
    qinv = gaussian.std_q_inv(eps_dec)
    logn = math.log2(n)
    return ntype, cond_ent, disp, eps_dec, qinv, logn


def p2p_rtilde(setup: P2PSetup, policy: LogTermPolicy = DEFAULT_POLICY) -> float:
    """Total bits n * R~ of the shared-randomness bin that the decoder needs.

    n E_phi[h_q(X|Y)] + sqrt(n E_phi Var[ı_q(X;Y)|X]) Q^{-1}(eps_dec) + gamma_dec log2 n,
    with ntype the nearest n-type to the input pmf and the product metric
    q_X q_{Y|X} in the decoder.
    """
    _, cond_ent, disp, _, qinv, logn = _p2p_pieces(setup, policy)
    n = setup.n
    return n * cond_ent + math.sqrt(n * disp) * qinv + policy.gamma_dec * logn


def p2p_report(setup: P2PSetup, policy: LogTermPolicy = DEFAULT_POLICY, clamp: bool = True) -> RateReport:
    ntype, cond_ent, disp, eps_dec, qinv, logn = _p2p_pieces(setup, policy)
    n = setup.n
    h_phi = type_entropy(ntype)
    enc = policy.encoder_constant(setup.input)
    ntilde = n * cond_ent + math.sqrt(n * disp) * qinv + policy.gamma_dec * logn
    raw = (n * h_phi - enc * logn - ntilde) / n
    disp_term = -math.sqrt(disp / n) * qinv
    log_term = -(enc + policy.gamma_dec) * logn / n
    rate = max(raw, 0.0) if clamp else raw
    return RateReport(
        rate=rate,
        dispersion_term=disp_term,
        log_term=log_term,
        clamped=clamp and raw < 0,
        components={
            "raw_rate": raw,
            "n": n,
            "eps": setup.eps,
            "eps_dec": eps_dec,
            "qinv": qinv,
            "type_counts": list(ntype.counts),
            "type_entropy": h_phi,
            "type_cond_entropy": cond_ent,
            "type_dispersion": disp,
            "mutual_information": mutual_information(setup.channel.joint(setup.input), setup.channel.input.name, setup.channel.output_names[0]),
            "n_rtilde": ntilde,
            "encoder_log_constant": enc,
            "decoder_log_constant": policy.gamma_dec,
            "c": policy.total_log_constant(setup.input),
        },
    )


def p2p_rate(setup: P2PSetup, policy: LogTermPolicy = DEFAULT_POLICY, clamp: bool = True) -> float:
    """Achievable rate [n H_phi(X) - (L+2) log2 n - n R~] / n in bits per use.

    A negative value is reported as 0 when ``clamp`` is set (see :func:`p2p_report`
    for the flag).
    """
    return p2p_report(setup, policy, clamp).rate


def p2p_normal_approximation(setup: P2PSetup) -> float:
    """I(X;Y) - sqrt(V/n) Q^{-1}(eps) with the unrounded input pmf."""
    joint = setup.channel.joint(setup.input)
    x, y = setup.channel.input.name, setup.channel.output_names[0]
    from .prob import channel_dispersion

    v = channel_dispersion(setup.input, setup.channel)
    return mutual_information(joint, x, y) - math.sqrt(v / setup.n) * gaussian.std_q_inv(setup.eps)


# -- broadcast ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BCSetup:
    q_u1u2x: JointPmf
    channel: Channel
    n: int
    eps: float
    u_axes: tuple[str, str] = ("U1", "U2")

    def __post_init__(self):
        _check_n_eps(self.n, self.eps)
        if len(self.channel.outputs) != 2:
            raise ValueError("broadcast channel needs two outputs")


@dataclass(frozen=True)
class BCQuantities:
    h_u1: float
    h_u2: float
    h_u1u2: float
    h_u1_y1: float
    h_u2_y2: float
    cov: np.ndarray
    n: int
    eps_dec: float
    encoder_shift: float
    decoder_shift: float

    @property
    def region(self) -> gaussian.GaussRegionSpec:
        return gaussian.GaussRegionSpec(self.cov, self.eps_dec)

    def limit_caps(self) -> tuple[float, float, float]:
        """(I(U1;Y1), I(U2;Y2), I(U1;Y1) + I(U2;Y2) - I(U1;U2))."""
        i1 = self.h_u1 - self.h_u1_y1
        i2 = self.h_u2 - self.h_u2_y2
        return i1, i2, self.h_u1u2 - self.h_u1_y1 - self.h_u2_y2


def bc_quantities(setup: BCSetup, policy: LogTermPolicy = DEFAULT_POLICY) -> BCQuantities:
    joint = setup.channel.joint(setup.q_u1u2x)
    u1, u2 = setup.u_axes
    y1, y2 = setup.channel.output_names
    n = setup.n
    logn = math.log2(n)
    q_u = marginalize(setup.q_u1u2x, [u1, u2])
    return BCQuantities(
        h_u1=entropy(joint, [u1]),
        h_u2=entropy(joint, [u2]),
        h_u1u2=entropy(joint, [u1, u2]),
        h_u1_y1=entropy(joint, [u1], [y1]),
        h_u2_y2=entropy(joint, [u2], [y2]),
        cov=np.asarray(bc_covariance(setup.q_u1u2x, setup.channel, setup.u_axes)),
        n=n,
        eps_dec=policy.budget(setup.eps, n),
        encoder_shift=policy.encoder_constant(q_u) * logn / n,
        decoder_shift=policy.gamma_dec * logn / n,
    )


def _segment_best(qs: BCQuantities, start: np.ndarray, end: np.ndarray, grid: int = 257) -> float:
    """max over the segment of P(N(0, cov) <= sqrt(n) (r - base - shift)).

    The orthant probability is log-concave in the corner, so the grid maximum
    plus a bounded refinement around it finds the segment maximum.
    """
    base = np.array([qs.h_u1_y1, qs.h_u2_y2]) + qs.decoder_shift
    rt = math.sqrt(qs.n)
    zero = np.zeros(2)

    def prob(s):
        r = start + np.multiply.outer(s, end - start)
        return gaussian.mvn_lower_orthant(zero, qs.cov, rt * (r - base) + gaussian.BOUNDARY_TOL)

    s = np.linspace(0.0, 1.0, grid)
    vals = np.asarray(prob(s))
    best = int(np.argmax(vals))
    top = float(vals[best])
    if np.allclose(start, end):
        return top
    lo, hi = s[max(best - 1, 0)], s[min(best + 1, grid - 1)]
    res = optimize.minimize_scalar(lambda u: -float(prob(np.array([u]))[0]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return max(top, -float(res.fun))


def bc_region_membership(setup: BCSetup, R1: float, R2: float, policy: LogTermPolicy = DEFAULT_POLICY, quantities: BCQuantities | None = None) -> bool:
    """Whether (R1, R2) is in the second-order Marton region.

    Needs R~ >= 0 with R_j + R~_j <= H(U_j) - a, R1 + R2 + R~1 + R~2 <= H(U1U2) - a,
    and R~ inside (H(U1|Y1), H(U2|Y2)) + d + Q^{-1}(V, eps) / sqrt(n), where a and d
    are the encoder and decoder log terms. The caps cut out a downward-closed
    polygon and the Gaussian region is an upper set, so it is enough to test
    the polygon's Pareto frontier.
    """
    qs = quantities or bc_quantities(setup, policy)
    if R1 < 0 or R2 < 0:
        return False
    c1 = qs.h_u1 - qs.encoder_shift - R1
    c2 = qs.h_u2 - qs.encoder_shift - R2
    cs = qs.h_u1u2 - qs.encoder_shift - R1 - R2
    if c1 < 0 or c2 < 0 or cs < 0:
        return False
    if cs >= c1 + c2:
        start = end = np.array([c1, c2])
    else:
        start = np.array([c1, max(cs - c1, 0.0)])
        end = np.array([max(cs - c2, 0.0), c2])
        start[0] = min(start[0], cs)
        end[1] = min(end[1], cs)
    return _segment_best(qs, start, end) >= 1.0 - qs.eps_dec


def bc_user_rate_cap(setup: BCSetup, user: int, policy: LogTermPolicy = DEFAULT_POLICY) -> float:
    """Largest R_j allowed by that user's own cap and the marginal of the Gaussian region."""
    qs = bc_quantities(setup, policy)
    h, hy = (qs.h_u1, qs.h_u1_y1) if user == 1 else (qs.h_u2, qs.h_u2_y2)
    sd = math.sqrt(max(qs.cov[user - 1, user - 1], 0.0))
    return h - qs.encoder_shift - hy - qs.decoder_shift - sd / math.sqrt(qs.n) * gaussian.std_q_inv(qs.eps_dec)


def bc_region_boundary(setup: BCSetup, policy: LogTermPolicy = DEFAULT_POLICY, grid=64, tol: float = 1e-6) -> np.ndarray:
    """Per direction d in the positive quadrant, the largest t with t * d in the region.

    ``grid`` is a direction count or an explicit (k, 2) array. Returns (k, 2)
    points; a direction along which no positive multiple is a member yields the origin.
    """
    qs = bc_quantities(setup, policy)
    dirs = gaussian.quadrant_directions(grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    out = []
    for d in dirs:
        d = d / np.linalg.norm(d)
        hi = min(qs.h_u1 / d[0] if d[0] > 0 else np.inf, qs.h_u2 / d[1] if d[1] > 0 else np.inf)
        lo = 0.0
        if not bc_region_membership(setup, 0.0, 0.0, policy, qs):
            out.append(np.zeros(2))
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if bc_region_membership(setup, *(mid * d), policy, qs):
                lo = mid
            else:
                hi = mid
        out.append(lo * d)
    return np.array(out)


def marton_limit_boundary(qs: BCQuantities, dirs) -> np.ndarray:
    i1, i2, isum = qs.limit_caps()
    out = []
    for d in np.asarray(dirs, dtype=float):
        d = d / np.linalg.norm(d)
        t = min(i1 / d[0] if d[0] > 0 else np.inf, i2 / d[1] if d[1] > 0 else np.inf, isum / d.sum())
        out.append(max(t, 0.0) * d)
    return np.array(out)


# -- wiretap -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WiretapSetup:
    """Wiretap input ``q_ux`` (axes U and the channel input) and channel with outputs (Y, Z).

    When U is the channel input itself, ``q_ux`` may have the single axis X.
    """

    q_ux: JointPmf
    channel: Channel
    n: int
    eps_r: float
    eps_sec: float
    theta: float = 0.5
    u_axis: str = "U"

    def __post_init__(self):
        _check_n_eps(self.n, self.eps_r, "eps_r")
        if not 0 < self.eps_sec < 1:
            raise ValueError("eps_sec must lie in (0, 1)")
        if not 0 <= self.theta <= 1:
            raise ValueError("theta must lie in [0, 1]")
        if len(self.channel.outputs) != 2:
            raise ValueError("wiretap channel needs outputs (Y, Z)")
        if self.u_axis not in self.q_ux.names:
            object.__setattr__(self, "u_axis", self.channel.input.name)

    def u_pmf(self) -> Pmf:
        return as_pmf(marginalize(self.q_ux, [self.u_axis]))


def wiretap_report(setup: WiretapSetup, policy: LogTermPolicy = DEFAULT_POLICY, clamp: bool = True) -> RateReport:
    n = setup.n
    if setup.theta in (0.0, 1.0):
        raise BudgetError("theta in {0, 1} leaves one constraint with zero error budget")
    e_r = policy.budget(setup.theta * setup.eps_r, n)
    e_s = policy.budget((1 - setup.theta) * setup.eps_sec, n, factor=3.0)
    joint = setup.channel.joint(setup.q_ux)
    u = setup.u_axis
    y, z = setup.channel.output_names
    i_uy = mutual_information(joint, u, y)
    i_uz = mutual_information(joint, u, z)
    vy, vz = wiretap_variances(setup.q_ux, setup.channel, u, policy.dispersion_conditioning)
    qy, qz = gaussian.std_q_inv(e_r), gaussian.std_q_inv(e_s)
    logn = math.log2(n)
    const = policy.encoder_constant(setup.u_pmf()) + policy.gamma_dec
    disp_term = -math.sqrt(vy / n) * qy - math.sqrt(vz / n) * qz
    log_term = -const * logn / n
    raw = i_uy - i_uz + disp_term + log_term
    return RateReport(
        rate=max(raw, 0.0) if clamp else raw,
        dispersion_term=disp_term,
        log_term=log_term,
        clamped=clamp and raw < 0,
        components={
            "raw_rate": raw,
            "I_UY": i_uy,
            "I_UZ": i_uz,
            "V_Y": vy,
            "V_Z": vz,
            "eps_r_budget": e_r,
            "eps_sec_budget": e_s,
            "theta": setup.theta,
            "log_constant": const,
            "n_rtilde": n * entropy(joint, [u], [y]) + math.sqrt(n * vy) * qy + policy.gamma_dec * logn,
        },
    )


def wiretap_rate(setup: WiretapSetup, policy: LogTermPolicy = DEFAULT_POLICY, clamp: bool = True) -> float:
    """I(U;Y) - I(U;Z) - sqrt(V_Y/n) Q^{-1}(theta eps_r) - sqrt(V_Z/n) Q^{-1}((1-theta) eps_sec) - c log2(n)/n."""
    return wiretap_report(setup, policy, clamp).rate


def wiretap_rtilde(setup: WiretapSetup, policy: LogTermPolicy = DEFAULT_POLICY) -> float:
    """Total bits n R~ of the decoder's shared-randomness bin."""
    return wiretap_report(setup, policy, clamp=False).components["n_rtilde"]


def ntype_for(pmf, n: int) -> NType:
    return nearest_ntype(pmf, n)

