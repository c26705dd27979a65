"""Experiment configuration: YAML parsing, strict key validation, defaults.

Unknown keys are rejected (with a closest-match suggestion); numeric domains
are checked up front so a bad resolution fails before any simulation starts.
The fully-defaulted config is echoed into the output directory and hashed;
identical (config, seed) reproduce byte-identical data files.
"""

from __future__ import annotations

import difflib
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .params import ModelParams, check_stability, default_resolution

EXPERIMENTS = (
    "analytics-table",
    "fixation-rate",
    "survival-curve",
    "qsd-twopoint",
    "duality-check",
    "wf-reference",
    "martingale-check",
    "local-fixation",
    "girsanov-check",
)

# keys accepted for every experiment
_COMMON_KEYS = {
    "experiment", "alpha", "beta", "gamma", "L", "M", "replicas", "horizon",
    "checkpoints", "seed", "output_dir", "workers",
}
_EXTRA_KEYS = {
    "analytics-table": {"alpha_grid", "gamma_grid"},
    "fixation-rate": {"u0", "fit_window", "snapshot_replicas", "snapshot_times"},
    "survival-curve": {"u0", "snapshot_replicas", "snapshot_times"},
    "qsd-twopoint": {"u0", "n_ensemble", "burn_in", "probe_points",
                     "probe_distances", "entrance_n_grid", "entrance_replicas",
                     "dual_L"},
    "duality-check": {"u0", "t_grid", "dual_L"},
    "wf-reference": {"x0", "M_wf", "histogram_time", "histogram_bins",
                     "fit_window"},
    "martingale-check": {"z0", "dual_L"},
    "local-fixation": {"F", "entrance_n_grid", "entrance_replicas", "dual_L"},
    "girsanov-check": {"u0"},
}


@dataclass
class ExperimentConfig:
    experiment: str
    params: ModelParams
    L: int
    M: int
    replicas: int
    horizon: float
    checkpoints: Optional[list]
    seed: int
    output_dir: str
    workers: int
    extra: dict = field(default_factory=dict)

    def echo_dict(self) -> dict:
        d = {
            "experiment": self.experiment,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "gamma": self.params.gamma,
            "L": self.L,
            "M": self.M,
            "replicas": self.replicas,
            "horizon": self.horizon,
            "checkpoints": self.checkpoints,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }
        d.update(self.extra)
        return d

    def config_hash(self) -> str:
        # worker count and output location deliberately excluded: neither may
        # affect output bytes
        d = self.echo_dict()
        d.pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ConfigError(ValueError):
    pass


def _reject_unknown(doc: dict, allowed: set):
    for key in doc:
        if key not in allowed:
            hint = difflib.get_close_matches(key, sorted(allowed), n=1)
            suffix = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown config key {key!r}{suffix}")


def _need(doc, key, typ, default=None, lo=None, hi=None):
    val = doc.get(key, default)
    if val is None:
        return None
    try:
        val = typ(val)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r} must be of type {typ.__name__}")
    if lo is not None and val < lo:
        raise ConfigError(f"key {key!r} must be >= {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(f"key {key!r} must be <= {hi}, got {val}")
    return val


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML experiment document."""
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of keys to values")
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        hint = difflib.get_close_matches(str(experiment), EXPERIMENTS, n=1)
        suffix = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(
            f"experiment must be one of {', '.join(EXPERIMENTS)}; "
            f"got {experiment!r}{suffix}")
    allowed = _COMMON_KEYS | _EXTRA_KEYS[experiment]
    _reject_unknown(doc, allowed)

    alpha = _need(doc, "alpha", float, 1.0)
    beta = _need(doc, "beta", float, 0.0)
    gamma = _need(doc, "gamma", float, 1.0)
    if alpha <= 0:
        raise ConfigError(f"key 'alpha' must be positive, got {alpha}")
    if gamma <= 0:
        raise ConfigError(f"key 'gamma' must be positive, got {gamma}")
    params = ModelParams(alpha, beta, gamma)

    L = _need(doc, "L", int, 64, lo=1)
    M = doc.get("M")
    if M is None:
        _, M = default_resolution(params, L)
    else:
        M = _need(doc, "M", int, lo=1)
        if L > 1:
            try:
                check_stability(params, L, M)
            except ValueError as e:
                raise ConfigError(str(e)) from None

    replicas = _need(doc, "replicas", int, 1000, lo=1)
    horizon = _need(doc, "horizon", float, 4.0)
    if horizon <= 0:
        raise ConfigError("key 'horizon' must be positive")
    checkpoints = doc.get("checkpoints")
    if checkpoints is not None:
        checkpoints = [float(t) for t in checkpoints]
        if any(t < 0 for t in checkpoints) or checkpoints != sorted(checkpoints):
            raise ConfigError("key 'checkpoints' must be nonnegative increasing")
    seed = _need(doc, "seed", int, 0)
    workers = _need(doc, "workers", int, 1, lo=1)
    output_dir = str(doc.get("output_dir", "out"))

    extra = {k: doc[k] for k in doc if k not in _COMMON_KEYS}
    _validate_extra(experiment, extra)
    return ExperimentConfig(
        experiment=experiment, params=params, L=L, M=M, replicas=replicas,
        horizon=horizon, checkpoints=checkpoints, seed=seed,
        output_dir=output_dir, workers=workers, extra=extra)


def _validate_u0(spec) -> dict:
    if spec is None:
        return {"kind": "constant", "value": 0.5}
    if isinstance(spec, (int, float)):
        return {"kind": "constant", "value": float(spec)}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("key 'u0' must be a number or a {kind: ...} mapping")
    kind = spec["kind"]
    if kind == "constant":
        v = float(spec.get("value", 0.5))
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"u0 constant value must lie in [0,1], got {v}")
        return {"kind": "constant", "value": v}
    if kind == "step":
        edge = float(spec.get("edge", 0.5))
        if not 0.0 < edge < 1.0:
            raise ConfigError("u0 step edge must lie in (0,1)")
        return {"kind": "step", "edge": edge}
    if kind == "interval":
        a, b = float(spec.get("a", 0.0)), float(spec.get("b", 0.5))
        if not 0.0 <= a < b <= 1.0:
            raise ConfigError("u0 interval needs 0 <= a < b <= 1")
        return {"kind": "interval", "a": a, "b": b}
    raise ConfigError(f"unknown u0 kind {kind!r}")


def _validate_extra(experiment: str, extra: dict):
    if "u0" in _EXTRA_KEYS[experiment]:
        extra["u0"] = _validate_u0(extra.get("u0"))
    if "z0" in extra:
        z = extra["z0"]
        if (not isinstance(z, dict) or "greens" not in z or "reds" not in z
                or not z["greens"] or not z["reds"]):
            raise ConfigError(
                "key 'z0' must be {greens: [...], reds: [...]} with both "
                "colours non-empty")
    if "x0" in extra:
        x0 = float(extra["x0"])
        if not 0.0 <= x0 <= 1.0:
            raise ConfigError("key 'x0' must lie in [0,1]")
    for key in ("alpha_grid", "gamma_grid", "t_grid", "entrance_n_grid"):
        if key in extra and extra[key] is not None:
            vals = [float(v) for v in extra[key]]
            if not vals or any(v <= 0 for v in vals):
                raise ConfigError(f"key {key!r} must be a list of positives")
    if "F" in extra and extra["F"] != "circle":
        pts = extra["F"]
        if not isinstance(pts, list) or not pts:
            raise ConfigError("key 'F' must be 'circle' or a point list")
