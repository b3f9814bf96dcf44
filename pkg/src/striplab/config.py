"""Experiment configuration: YAML schema, validation, model construction.

A config file is a single YAML document with blocks `profile`, `model`,
`experiment` (kind plus kind-specific parameters, including an optional
`potential` sub-block), and scalars `seed`, `jobs`, `output`.  Validation is
strict: unknown keys anywhere are rejected with the failing stage named.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .geometry import (
    CappedPowerProfile,
    ConstantCurvatureProfile,
    FlatProfile,
    MetricModel,
    PowerProfile,
    SDependentProfile,
    TWO_PI,
)
from .pressure import PotentialSpec

EXPERIMENT_KINDS = (
    "curvature",
    "geodesic",
    "shadow",
    "riccati",
    "decay",
    "key_inequality",
    "pressure_gap",
    "lambda",
)

_PROFILE_KEYS = {
    "flat": set(),
    "power": {"m", "c"},
    "capped_power": {"m", "c", "x_cap"},
    "s_dependent": {"m", "c", "gamma0", "gamma1", "c_min"},
    "constant_curvature": {"k"},
}

_EXPERIMENT_KEYS = {
    "curvature": {"x_lo", "x_hi", "grid", "s_window", "certificates"},
    "geodesic": {"s0", "x0", "phi0", "t_max", "tol", "strip_radius"},
    "shadow": {"s0", "t", "R", "tol"},
    "riccati": {
        "mode",
        "C",
        "m",
        "R",
        "s0",
        "x0",
        "phi0",
        "T_back",
        "u_seed",
        "count",
        "x_lo",
        "x_hi",
        "phi_lo",
        "phi_hi",
        "T_max",
    },
    "decay": {"regime", "t", "R", "check_t_doubling", "crossing_defect", "shadow_tol"},
    "key_inequality": {"t_list", "R", "delta", "perturbations", "potential", "shadow_tol"},
    "pressure_gap": {
        "t_list",
        "R",
        "delta",
        "perturbations",
        "epsilon",
        "transition_time",
        "potential",
        "shadow_tol",
    },
    "lambda": {"delta", "t", "seeds", "potential"},
}

_POTENTIAL_KEYS = {"kind", "C0", "C", "a", "b", "R_cut"}
_SEED_KEYS = {"kind", "count", "x", "x_lo", "x_hi", "phi_lo", "phi_hi"}


@dataclass
class ExperimentConfig:
    model: MetricModel
    kind: str
    params: dict
    potential: PotentialSpec | None
    seed: int
    jobs: int
    output: str
    raw: dict = field(default_factory=dict, repr=False)


def _require(cond, stage, msg):
    if not cond:
        raise ConfigError(stage, msg)


def _check_keys(block, allowed, stage):
    unknown = set(block) - allowed
    _require(not unknown, stage, f"unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def build_profile(block):
    _require(isinstance(block, dict), "profile", "profile block must be a mapping")
    kind = str(block.get("kind", "")).replace("-", "_")
    _require(kind in _PROFILE_KEYS, "profile", f"unknown profile kind {kind!r}")
    _check_keys(set(block) - {"kind"}, _PROFILE_KEYS[kind], "profile")
    try:
        if kind == "flat":
            return FlatProfile()
        if kind == "power":
            return PowerProfile(m=int(block["m"]), c=float(block["c"]))
        if kind == "capped_power":
            return CappedPowerProfile(
                m=int(block["m"]), c=float(block["c"]), x_cap=float(block["x_cap"])
            )
        if kind == "s_dependent":
            gamma0 = float(block.get("gamma0", TWO_PI))
            return SDependentProfile(
                m=int(block["m"]),
                c=float(block["c"]),
                gamma0=gamma0,
                gamma1=float(block.get("gamma1", gamma0 / 2.0)),
                c_min=float(block.get("c_min", block["c"])),
            )
        return ConstantCurvatureProfile(k=float(block["k"]))
    except KeyError as exc:
        raise ConfigError("profile", f"missing required key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("profile", str(exc)) from exc


def build_model(profile_block, model_block):
    profile = build_profile(profile_block or {})
    model_block = model_block or {}
    _require(isinstance(model_block, dict), "model", "model block must be a mapping")
    _check_keys(model_block, {"n", "X", "gamma0"}, "model")
    gamma0 = float(model_block.get("gamma0", getattr(profile, "gamma0", TWO_PI)))
    if profile.s_dependent and abs(gamma0 - profile.gamma0) > 1e-12 * gamma0:
        raise ConfigError("model", "model.gamma0 must match profile.gamma0 for s-dependent profiles")
    try:
        return MetricModel(
            profile=profile,
            n=int(model_block.get("n", 2)),
            X=float(model_block.get("X", 0.5)),
            gamma0=gamma0,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from exc


def build_potential(block, model):
    _require(isinstance(block, dict), "experiment.potential", "potential block must be a mapping")
    _check_keys(block, _POTENTIAL_KEYS, "experiment.potential")
    try:
        return PotentialSpec(
            kind=str(block.get("kind", "power_law")).replace("-", "_"),
            C0=float(block.get("C0", 0.0)),
            C=float(block.get("C", 1.0)),
            a=float(block.get("a", 1.0)),
            b=float(block.get("b", 1.0)),
            R_cut=float(block.get("R_cut", 1.0)),
            m=model.order or 2,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("experiment.potential", str(exc)) from exc


def _validate_experiment(kind, block, model):
    _check_keys(set(block) - {"kind", "potential"}, _EXPERIMENT_KEYS[kind], f"experiment.{kind}")
    params = {k: v for k, v in block.items() if k not in ("kind", "potential")}
    if kind == "curvature":
        params.setdefault("x_lo", 0.01)
        params.setdefault("x_hi", model.X * 0.6)
        params.setdefault("grid", 64)
        params.setdefault("certificates", model.order is not None)
        _require(int(params["grid"]) >= 16, "experiment.curvature", "grid must be >= 16")
    elif kind == "geodesic":
        for key in ("x0", "t_max"):
            _require(key in params, "experiment.geodesic", f"missing required key {key!r}")
        params.setdefault("s0", 0.0)
        params.setdefault("phi0", 0.0)
        params.setdefault("tol", 1e-10)
    elif kind == "shadow":
        for key in ("t", "R"):
            _require(key in params, "experiment.shadow", f"missing required key {key!r}")
        params.setdefault("s0", 0.0)
        params.setdefault("tol", max(1e-6, 1e-5 * float(params["t"])))
    elif kind == "riccati":
        mode = str(params.get("mode", "field"))
        _require(
            mode in ("comparison", "limit", "field"),
            "experiment.riccati",
            f"unknown mode {mode!r}",
        )
        params["mode"] = mode
        if mode == "comparison":
            for key in ("C", "m", "R"):
                _require(key in params, "experiment.riccati", f"missing required key {key!r}")
        elif mode == "limit":
            _require("x0" in params, "experiment.riccati", "missing required key 'x0'")
            params.setdefault("s0", 0.0)
            params.setdefault("phi0", 0.0)
            params.setdefault("u_seed", 1e3)
        else:
            params.setdefault("count", 64)
            params.setdefault("x_lo", 1e-3)
            params.setdefault("x_hi", 1e-1)
            params.setdefault("phi_lo", -1e-2)
            params.setdefault("phi_hi", 1e-2)
    elif kind == "decay":
        from .scaling import REGIMES

        for key in ("regime", "t", "R"):
            _require(key in params, "experiment.decay", f"missing required key {key!r}")
        regime = str(params["regime"]).replace("-", "_")
        _require(regime in REGIMES, "experiment.decay", f"unknown regime {regime!r}")
        params["regime"] = regime
        params.setdefault("check_t_doubling", True)
    elif kind in ("key_inequality", "pressure_gap"):
        for key in ("t_list", "R", "delta"):
            _require(key in params, f"experiment.{kind}", f"missing required key {key!r}")
        _require(
            isinstance(params["t_list"], (list, tuple)) and len(params["t_list"]) >= 1,
            f"experiment.{kind}",
            "t_list must be a nonempty list",
        )
        params.setdefault("perturbations", 6)
        if kind == "pressure_gap":
            params.setdefault("epsilon", float(params["R"]) / 2.0)
            params.setdefault("transition_time", 1.0)
    elif kind == "lambda":
        for key in ("delta", "t", "seeds"):
            _require(key in params, "experiment.lambda", f"missing required key {key!r}")
        seeds = params["seeds"]
        _require(isinstance(seeds, dict), "experiment.lambda", "seeds must be a mapping")
        _check_keys(seeds, _SEED_KEYS, "experiment.lambda.seeds")
        seed_kind = str(seeds.get("kind", "sing_grid"))
        _require(
            seed_kind in ("sing_grid", "strip_random"),
            "experiment.lambda",
            f"unknown seeds kind {seed_kind!r}",
        )
        seeds.setdefault("kind", seed_kind)
        seeds.setdefault("count", 16)
    return params


def validate_config(raw):
    """Validate a parsed YAML mapping into an ExperimentConfig."""
    _require(isinstance(raw, dict), "config", "top level must be a mapping")
    _check_keys(raw, {"profile", "model", "experiment", "seed", "jobs", "output"}, "config")
    model = build_model(raw.get("profile"), raw.get("model"))
    exp = raw.get("experiment")
    _require(isinstance(exp, dict), "experiment", "experiment block must be a mapping")
    kind = str(exp.get("kind", "")).replace("-", "_")
    _require(kind in EXPERIMENT_KINDS, "experiment", f"unknown experiment kind {kind!r}")
    params = _validate_experiment(kind, exp, model)
    potential = None
    if kind in ("key_inequality", "pressure_gap", "lambda"):
        potential = build_potential(exp.get("potential", {}), model)
    try:
        seed = int(raw.get("seed", 0))
        jobs = int(raw.get("jobs", 1))
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", f"seed/jobs must be integers: {exc}") from exc
    _require(jobs >= 1, "config", "jobs must be >= 1")
    return ExperimentConfig(
        model=model,
        kind=kind,
        params=params,
        potential=potential,
        seed=seed,
        jobs=jobs,
        output=str(raw.get("output", "out")),
        raw=raw,
    )


def load_config(path):
    """Parse and validate a YAML experiment configuration file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"YAML parse error in {path}: {exc}") from exc
    return validate_config(raw)
