"""Experiment configs, validation and sweep execution behind the command line.

A config is a JSON object::

    {"kind": "thm1" | "thm2" | "p2p" | "bc" | "wiretap",
     "seed": <int>, "workers": <int, optional>, "output": <path, optional>,
     "payload": {...kind-specific fields...}}

Each sweep point gets its own generator, derived from the root seed and the
point's index, so rows do not depend on how many workers run them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import binning, protocols, secondorder, slc
from .gaussian import quadrant_directions
from .binning import ENUMERATION_GUARD, BinningSpec, GuardError
from .prob import MAX_CELLS, Channel, JointPmf, Pmf, PmfError, as_pmf, marginalize

KINDS = ("thm1", "thm2", "p2p", "bc", "wiretap")
WORKERS_ENV = "OSRB_WORKERS"


class ConfigError(ValueError):
    """Config does not match its kind's schema."""


@dataclass
class ExperimentConfig:
    kind: str
    payload: dict
    seed: int
    workers: int = 1
    output_path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an explicit integer in [0, 2^64)")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers must be an integer >= 1")

    @classmethod
    def from_json(cls, obj: Any) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        for key in ("kind", "seed", "payload"):
            if key not in obj:
                raise ConfigError(f"missing field {key!r}")
        if not isinstance(obj["payload"], dict):
            raise ConfigError("payload must be an object")
        return cls(obj["kind"], obj["payload"], obj["seed"], obj.get("workers", 1), obj.get("output"))

    def to_json(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed, "workers": self.workers, "payload": self.payload}
        if self.output_path is not None:
            out["output"] = self.output_path
        return out

    def config_hash(self) -> str:
        """SHA-256 prefix over kind, seed and payload (workers and output path excluded)."""
        canon = json.dumps({"kind": self.kind, "seed": self.seed, "payload": self.payload}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def effective_workers(config: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            w = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if w < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
        return w
    return config.workers


def point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


# -- payload parsing ---------------------------------------------------------


def _need(payload: dict, key: str, path: str):
    if key not in payload:
        raise ConfigError(f"{path}: missing field {key!r}")
    return payload[key]


def _prefixed(exc: PmfError, path: str) -> PmfError:
    """Prefix the config path once, keeping the offending index."""
    if exc.detail.startswith(path):
        return exc
    return PmfError(f"{path}: {exc.detail}", exc.index)


def parse_pmf(obj, path: str, names=None) -> JointPmf:
    """Pmf from a flat list (single axis) or the joint pmf JSON schema."""
    try:
        if isinstance(obj, list):
            name = (names or ["X"])[0]
            return Pmf(np.asarray(obj, dtype=float), name)
        if isinstance(obj, dict):
            pmf = JointPmf.from_json(obj)
            if names and "axis_names" not in obj:
                pmf = pmf.renamed(dict(zip(pmf.names, names)))
            return pmf
    except PmfError as exc:
        raise _prefixed(exc, path) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"{path}: expected a list of probabilities or a joint pmf object")


def parse_channel(obj, path: str, input: str = "X", outputs=None) -> Channel:
    """Channel from the channel JSON schema or a shorthand.

    Shorthands: ``{"bsc": p}``; ``{"product": [c1, c2]}`` (tuple input, one
    output per factor); ``{"broadcast": [c1, c2]}`` (shared input).
    """
    try:
        if isinstance(obj, dict) and "bsc" in obj:
            return Channel.bsc(float(obj["bsc"]), input, (outputs or ["Y"])[0])
        if isinstance(obj, dict) and "product" in obj:
            parts = [parse_channel(c, f"{path}.product[{i}]", f"X{i + 1}") for i, c in enumerate(obj["product"])]
            ch = Channel.product(*parts, input=input)
            return Channel(ch.rows, input, outputs or list(ch.output_names))
        if isinstance(obj, dict) and "broadcast" in obj:
            parts = [parse_channel(c, f"{path}.broadcast[{i}]", input) for i, c in enumerate(obj["broadcast"])]
            return Channel.broadcast(*parts, outputs=outputs)
        if isinstance(obj, dict):
            return Channel.from_json(obj, input, outputs)
    except PmfError as exc:
        raise _prefixed(exc, path) from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"{path}: expected a channel object")


def _float_list(payload, key, path, default=None):
    val = payload.get(key, default)
    if val is None:
        raise ConfigError(f"{path}: missing field {key!r}")
    if not isinstance(val, list):
        val = [val]
    try:
        return [float(v) for v in val]
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}: expected numbers") from None


def _int_list(payload, key, path, default=None):
    vals = _float_list(payload, key, path, default)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{path}.{key}: expected integers")
    return [int(v) for v in vals]


def _policy(payload) -> secondorder.LogTermPolicy:
    opts = payload.get("policy", {})
    if not isinstance(opts, dict):
        raise ConfigError("payload.policy must be an object")
    try:
        return secondorder.LogTermPolicy(**opts)
    except TypeError as exc:
        raise ConfigError(f"payload.policy: {exc}") from None


@dataclass
class BinningExperiment:
    source: JointPmf
    spec: BinningSpec
    gamma_grid: list
    t_z: Any
    mc_trials: int
    exponent: str = "tight"
    t_joint: JointPmf | None = None
    conditioning: str = "chain"


def parse_binning_payload(payload: dict, with_metric: bool) -> BinningExperiment:
    path = "payload"
    source = parse_pmf(_need(payload, "source", path), f"{path}.source")
    spec_raw = _need(payload, "spec", path)
    if not isinstance(spec_raw, list) or not spec_raw or len(spec_raw) > len(source.axes):
        raise ConfigError(f"{path}.spec: expected a list of [size, M] pairs, one per binned axis")
    parts = []
    for i, entry in enumerate(spec_raw):
        if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(v, int) and v >= 1 for v in entry)):
            raise ConfigError(f"{path}.spec[{i}]: expected [size, M] with positive integers")
        ax = source.axes[i]
        if entry[0] != ax.size:
            raise ConfigError(f"{path}.spec[{i}]: size {entry[0]} does not match source axis {ax.name!r} of size {ax.size}")
        parts.append((ax.name, entry[0], entry[1]))
    spec = BinningSpec(parts)
    gammas = _float_list(payload, "gamma_grid", path)
    if any(g <= 0 for g in gammas):
        raise ConfigError(f"{path}.gamma_grid: gammas must be positive")
    z_axes = [a for a in source.axes if a.name not in spec.names]
    nz = int(np.prod([a.size for a in z_axes])) if z_axes else 1
    t_raw = payload.get("t_z", "marginal")
    if t_raw == "marginal":
        t_z = None
    elif t_raw == "uniform":
        t_z = np.full(nz, 1.0 / nz)
    else:
        t_z = parse_pmf(t_raw, f"{path}.t_z").probs.ravel()
        if t_z.size != nz:
            raise ConfigError(f"{path}.t_z: has {t_z.size} entries, Z has {nz} symbols")
    exp = BinningExperiment(source, spec, gammas, t_z, int(payload.get("mc_trials", 1000)), payload.get("exponent", "tight"))
    if exp.exponent not in ("tight", "loose"):
        raise ConfigError(f"{path}.exponent: must be 'tight' or 'loose'")
    if exp.mc_trials < 0:
        raise ConfigError(f"{path}.mc_trials: must be >= 0")
    if with_metric:
        exp.t_joint = metric_pmf(source, payload.get("t_joint", "match"), f"{path}.t_joint")
        exp.conditioning = payload.get("conditioning", "chain")
        if exp.conditioning not in ("chain", "marginal"):
            raise ConfigError(f"{path}.conditioning: must be 'chain' or 'marginal'")
    return exp


def metric_pmf(source: JointPmf, spec, path: str) -> JointPmf:
    """Decoder metric: ``"match"``, ``"iid_marginals"`` (product of axis marginals), ``"uniform"`` or a pmf."""
    if spec == "match":
        return source
    if spec == "iid_marginals":
        table = np.ones(())
        for a in source.axes:
            table = np.multiply.outer(table, marginalize(source, [a.name]).probs)
        return JointPmf(source.axes, table, validate=False)
    if spec == "uniform":
        return JointPmf(source.axes, np.full(source.shape, 1.0 / source.probs.size), validate=False)
    t = parse_pmf(spec, path)
    if t.shape != source.shape:
        raise ConfigError(f"{path}: shape {t.shape} differs from the source's {source.shape}")
    return t.renamed(dict(zip(t.names, source.names)))


# -- per-kind sweeps ---------------------------------------------------------
#
# Each kind provides ``points(payload)`` (a list of picklable point specs)
# and ``evaluate(payload, point, rng)`` returning a list of row dicts.


def _thm1_points(payload):
    exp = parse_binning_payload(payload, False)
    return list(exp.gamma_grid)


def _thm1_eval(payload, gamma, rng):
    exp = parse_binning_payload(payload, False)
    params = binning.SGamma1Params(exp.source, exp.t_z, exp.spec, gamma)
    row = {
        "gamma": gamma,
        "bound": binning.thm1_bound(params, exp.exponent),
        "exact_tv": binning.exact_expected_tv(exp.source, exp.spec),
    }
    if exp.mc_trials >= 2:
        row["mc_tv"], row["mc_halfwidth"] = binning.mc_expected_tv(exp.source, exp.spec, exp.mc_trials, rng)
    else:
        row["mc_tv"] = row["mc_halfwidth"] = float("nan")
    return [row]


def _thm2_eval(payload, gamma, rng):
    exp = parse_binning_payload(payload, True)
    params = slc.SGamma2Params(exp.t_joint, exp.spec, gamma, exp.conditioning)
    row = {
        "gamma": gamma,
        "lower_bound": slc.thm2_lower_bound(exp.source, exp.t_joint, exp.spec),
        "exact_correct": slc.exact_expected_correct(exp.source, exp.t_joint, exp.spec),
        "upper_bound": slc.thm2_upper_bound(exp.source, params),
    }
    if exp.mc_trials >= 2:
        row["mc_error"], row["mc_halfwidth"] = slc.mc_error_prob(exp.source, exp.t_joint, exp.spec, exp.mc_trials, rng)
    else:
        row["mc_error"] = row["mc_halfwidth"] = float("nan")
    return [row]


def _p2p_common(payload):
    ch = parse_channel(_need(payload, "channel", "payload"), "payload.channel")
    inp = parse_pmf(payload.get("input", [1.0 / ch.input.size] * ch.input.size), "payload.input", [ch.input.name])
    return as_pmf(inp), ch


def _p2p_points(payload):
    eps = _float_list(payload, "eps", "payload")
    return [(n, e) for n in _int_list(payload, "n_grid", "payload") for e in eps]


def _p2p_eval(payload, point, rng):
    n, eps = point
    inp, ch = _p2p_common(payload)
    policy = _policy(payload)
    setup = secondorder.P2PSetup(inp, ch, n, eps)
    rep = secondorder.p2p_report(setup, policy)
    row = {
        "n": n,
        "eps": eps,
        "rate": rep.rate,
        "raw_rate": rep.components["raw_rate"],
        "clamped": int(rep.clamped),
        "dispersion_term": rep.dispersion_term,
        "log_term": rep.log_term,
        "normal_approximation": secondorder.p2p_normal_approximation(setup),
        "mutual_information": rep.components["mutual_information"],
        "n_rtilde": rep.components["n_rtilde"],
    }
    sim = payload.get("simulate")
    if sim:
        R = sim["rate"] if "rate" in sim else rep.rate - float(sim.get("rate_gap", 0.2))
        res = protocols.p2p_simulate(setup, R, policy, int(sim.get("trials", 1000)), rng, sim.get("rtilde_bits"))
        row.update(sim_rate=R, sim_error=res.error, sim_halfwidth=res.half_width, sim_upper=res.upper, sim_messages=res.messages, sim_bins=res.bins)
    return [row]


def _bc_common(payload):
    ch = parse_channel(_need(payload, "channel", "payload"), "payload.channel", "X", ["Y1", "Y2"])
    q = parse_pmf(_need(payload, "q_u1u2x", "payload"), "payload.q_u1u2x", ["U1", "U2", "X"])
    if set(q.names) != {"U1", "U2", "X"}:
        raise ConfigError("payload.q_u1u2x: axes must be U1, U2, X")
    return q, ch


def _bc_points(payload):
    eps = _float_list(payload, "eps", "payload")
    return [(n, e) for n in _int_list(payload, "n_grid", "payload") for e in eps]


def _bc_eval(payload, point, rng):
    n, eps = point
    q, ch = _bc_common(payload)
    policy = _policy(payload)
    setup = secondorder.BCSetup(q, ch, n, eps)
    k = int(payload.get("directions", 16))
    dirs = quadrant_directions(k)
    pts = secondorder.bc_region_boundary(setup, policy, dirs)
    qs = secondorder.bc_quantities(setup, policy)
    lim = secondorder.marton_limit_boundary(qs, dirs)
    return [
        {"n": n, "eps": eps, "direction": i, "d1": d[0], "d2": d[1], "R1": p[0], "R2": p[1], "limit_R1": l[0], "limit_R2": l[1]}
        for i, (d, p, l) in enumerate(zip(dirs, pts, lim))
    ]


def _wiretap_common(payload):
    ch = parse_channel(_need(payload, "channel", "payload"), "payload.channel", "X", ["Y", "Z"])
    raw = payload.get("q_ux", [1.0 / ch.input.size] * ch.input.size)
    q = parse_pmf(raw, "payload.q_ux", ["X"] if isinstance(raw, list) else ["U", "X"])
    return q, ch


def _wiretap_points(payload):
    thetas = _float_list(payload, "theta_grid", "payload", [0.5])
    return [(n, t) for n in _int_list(payload, "n_grid", "payload") for t in thetas]


def _wiretap_eval(payload, point, rng):
    n, theta = point
    q, ch = _wiretap_common(payload)
    policy = _policy(payload)
    setup = secondorder.WiretapSetup(q, ch, n, float(_need(payload, "eps_r", "payload")), float(_need(payload, "eps_sec", "payload")), theta)
    rep = secondorder.wiretap_report(setup, policy)
    c = rep.components
    row = {
        "n": n,
        "theta": theta,
        "rate": rep.rate,
        "raw_rate": c["raw_rate"],
        "clamped": int(rep.clamped),
        "dispersion_term": rep.dispersion_term,
        "log_term": rep.log_term,
        "I_UY": c["I_UY"],
        "I_UZ": c["I_UZ"],
        "V_Y": c["V_Y"],
        "V_Z": c["V_Z"],
    }
    sim = payload.get("simulate")
    if sim:
        R = sim["rate"] if "rate" in sim else rep.rate
        est = protocols.wiretap_simulate_secrecy(
            setup, R, policy, int(sim.get("trials", 10000)), rng, sim.get("rtilde_bits"), int(sim.get("f_scan", 16)), sim.get("estimator", "exact")
        )
        row.update(
            sim_rate=R,
            sim_tv=est.tv,
            sim_tv_halfwidth=est.tv_half_width,
            sim_tv_bias=est.tv_bias_bound,
            sim_error=est.error,
            sim_f=est.f,
            sim_f_scanned=est.f_scanned,
        )
    return [row]


KIND_TABLE: dict[str, tuple[Callable, Callable]] = {
    "thm1": (_thm1_points, _thm1_eval),
    "thm2": (_thm1_points, _thm2_eval),
    "p2p": (_p2p_points, _p2p_eval),
    "bc": (_bc_points, _bc_eval),
    "wiretap": (_wiretap_points, _wiretap_eval),
}


# -- validation --------------------------------------------------------------


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and not self.warnings

    def to_json(self) -> dict:
        return {"errors": self.errors, "warnings": self.warnings}


def _collect(report: ValidationReport, fn, *args):
    try:
        return fn(*args)
    except (ConfigError, PmfError) as exc:
        report.errors.append(str(exc))
    except (ValueError, TypeError, KeyError) as exc:
        report.errors.append(f"payload: {exc}")
    return None


def _p2p_simulation_guard(report: ValidationReport, payload: dict):
    """Warn when a sweep point would need more message or bin bits than a simulation can sample."""
    sim = payload["simulate"]
    for index, point in enumerate(_p2p_points(payload)):
        n, eps = point
        inp, ch = _p2p_common(payload)
        rep = secondorder.p2p_report(secondorder.P2PSetup(inp, ch, n, eps), _policy(payload))
        R = sim["rate"] if "rate" in sim else rep.rate - float(sim.get("rate_gap", 0.2))
        bits = max(n * R, sim.get("rtilde_bits", rep.components["n_rtilde"]))
        if bits > 62:
            report.warnings.append(f"guard: simulation at point {index} (n={n}) needs {bits:.0f} bits of messages or bins (limit 62)")


def _validate_rate_payload(report: ValidationReport, kind: str, payload: dict):
    """Check channel, input pmf, grids and policy independently so that every problem is listed."""
    outputs = {"p2p": None, "bc": ["Y1", "Y2"], "wiretap": ["Y", "Z"]}[kind]
    ch = None
    if "channel" not in payload:
        report.errors.append("payload: missing field 'channel'")
    else:
        ch = _collect(report, parse_channel, payload["channel"], "payload.channel", "X", outputs)
    key = {"p2p": "input", "bc": "q_u1u2x", "wiretap": "q_ux"}[kind]
    if key in payload:
        raw = payload[key]
        names = {"p2p": ["X"], "bc": ["U1", "U2", "X"], "wiretap": ["X"] if isinstance(raw, list) else ["U", "X"]}[kind]
        _collect(report, parse_pmf, raw, f"payload.{key}", names)
    elif kind == "bc":
        report.errors.append("payload: missing field 'q_u1u2x'")
    if ch is not None and not report.errors:
        common = {"p2p": _p2p_common, "bc": _bc_common, "wiretap": _wiretap_common}[kind]
        _collect(report, common, payload)
    _collect(report, _policy, payload)
    if kind == "wiretap":
        for k in ("eps_r", "eps_sec"):
            v = _collect(report, _float_list, payload, k, "payload")
            if v is not None and not all(0 < e < 1 for e in v):
                report.errors.append(f"payload.{k}: must lie in (0, 1)")
        thetas = _collect(report, _float_list, payload, "theta_grid", "payload", [0.5])
        if thetas is not None and not all(0 < t < 1 for t in thetas):
            report.errors.append("payload.theta_grid: values must lie strictly inside (0, 1)")
    else:
        eps = _collect(report, _float_list, payload, "eps", "payload")
        if eps is not None and not all(0 < e < 1 for e in eps):
            report.errors.append("payload.eps: must lie in (0, 1)")
    ns = _collect(report, _int_list, payload, "n_grid", "payload")
    if ns is not None and any(n < 2 for n in ns):
        report.errors.append("payload.n_grid: blocklengths must be >= 2")
    if kind == "p2p" and payload.get("simulate") and ns and not report.errors:
        _collect(report, _p2p_simulation_guard, report, payload)
    if kind == "wiretap" and payload.get("simulate") and ns and ch is not None and not report.errors:
        q, ch = _wiretap_common(payload)
        ku, kz = q.shape[0], ch.outputs[1].size
        for n in ns:
            if ku**n > protocols.EXACT_SEQUENCES or (ku**n) * (kz**n) > MAX_CELLS:
                report.warnings.append(f"guard: secrecy simulation at n={n} exceeds the tabulation guard")


def validate_config(obj) -> ValidationReport:
    """Schema, normalization and guard checks without running anything; collects every violation."""
    report = ValidationReport()
    cfg = _collect(report, ExperimentConfig.from_json, obj)
    if cfg is None:
        return report
    payload = cfg.payload
    if cfg.kind in ("thm1", "thm2"):
        # check each pmf on its own so that every problem gets reported
        src = _collect(report, parse_pmf, payload.get("source"), "payload.source") if "source" in payload else None
        if src is None and "source" not in payload:
            report.errors.append("payload: missing field 'source'")
        if cfg.kind == "thm2" and not isinstance(payload.get("t_joint", "match"), str):
            _collect(report, parse_pmf, payload["t_joint"], "payload.t_joint")
        if isinstance(payload.get("t_z"), (list, dict)):
            _collect(report, parse_pmf, payload["t_z"], "payload.t_z")
        if src is not None:
            exp = _collect(report, parse_binning_payload, payload, cfg.kind == "thm2")
            if exp is not None:
                count = exp.spec.assignment_count()
                if count > ENUMERATION_GUARD:
                    report.warnings.append(
                        f"guard: exact oracle would enumerate {count} binning assignments (guard {ENUMERATION_GUARD})"
                    )
    else:
        _validate_rate_payload(report, cfg.kind, payload)
    return report


# -- running -----------------------------------------------------------------


def _format(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _run_point(args):
    kind, payload, seed, index, point = args
    rows = KIND_TABLE[kind][1](payload, point, point_rng(seed, index))
    return index, rows


def iter_rows(config: ExperimentConfig, workers: int | None = None):
    """Yield ``(index, rows)`` in sweep order."""
    points = KIND_TABLE[config.kind][0](config.payload)
    tasks = [(config.kind, config.payload, config.seed, i, p) for i, p in enumerate(points)]
    workers = workers or effective_workers(config)
    if workers == 1 or len(tasks) <= 1:
        for t in tasks:
            yield _run_point(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so output order is fixed by sweep index
        yield from pool.map(_run_point, tasks)


def run_config(config: ExperimentConfig, out: io.TextIOBase, workers: int | None = None) -> int:
    """Write the CSV for ``config`` to ``out``, flushing after every sweep point. Returns the row count."""
    h = config.config_hash()
    writer = None
    count = 0
    for index, rows in iter_rows(config, workers):
        for row in rows:
            full = {"config_hash": h, "seed": config.seed, "point": index, **row}
            if writer is None:
                writer = csv.DictWriter(out, fieldnames=list(full), lineterminator="\n")
                writer.writeheader()
            writer.writerow({k: _format(v) for k, v in full.items()})
            count += 1
        out.flush()
    return count


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GuardError",
    "KINDS",
    "ValidationReport",
    "WORKERS_ENV",
    "effective_workers",
    "load_config",
    "metric_pmf",
    "parse_binning_payload",
    "parse_channel",
    "parse_pmf",
    "point_rng",
    "run_config",
    "validate_config",
]
