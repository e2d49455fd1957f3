"""Experiment configuration: YAML/JSON file -> validated dataclasses.

Every validation failure raises ConfigError naming the dotted field path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, InvalidArgumentError
from .estimator import SystemModel
from .expand import affine_map
from .reach import ReachConfig
from .risk import RiskField, RiskSet, build_field, validate_correlation
from .scenario import ForkliftParams, forklift_model

OUTPUT_FORMATS = ("records", "csv")


@dataclass(frozen=True)
class SystemConfig:
    model: str = "forklift"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EstimatorConfig:
    x0: tuple = (0.0, 5.0, 0.0)
    P0: tuple = ((0.03, 0.0, 0.0), (0.0, 0.03, 0.0), (0.0, 0.0, 0.001))
    detector_confidence: float = 0.95
    detector_threshold: float | None = None


@dataclass(frozen=True)
class RiskConfig:
    sets: tuple = ()
    dilution_factor: float = 1.05
    levels: int = 20
    correlation: tuple | None = None
    lookahead: float = 1.5
    duration: float = 10.0


@dataclass(frozen=True)
class SimulationConfig:
    traces: int = 500
    seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    format: str = "records"


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    estimator: EstimatorConfig
    reach: ReachConfig
    risk: RiskConfig
    simulation: SimulationConfig
    output: OutputConfig
    model: SystemModel = field(repr=False, compare=False, default=None)
    field_: RiskField | None = field(repr=False, compare=False, default=None)

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.estimator.x0, dtype=float)

    @property
    def P0(self) -> np.ndarray:
        return np.asarray(self.estimator.P0, dtype=float)


FORKLIFT_RISK_SETS = (
    {"name": "obstacle", "lower": [9.0, 4.0], "upper": [22.0, 6.5], "risk": 2000.0, "subspace": [0, 1]},
    {"name": "worker", "lower": [24.0, 3.0], "upper": [26.0, 5.0], "risk": 5000.0, "subspace": [0, 1]},
)


def default_config_dict() -> dict:
    """The forklift case study settings."""
    return {
        "system": {"model": "forklift", "params": {}},
        "estimator": {
            "x0": [0.0, 5.0, 0.0],
            "P0": [[0.03, 0.0, 0.0], [0.0, 0.03, 0.0], [0.0, 0.0, 0.001]],
            "detector_confidence": 0.95,
        },
        "reach": {"taylor_order": 2, "horizon": 10, "dt": 0.1, "noise_confidence": 0.95},
        "risk": {
            "sets": [dict(s) for s in FORKLIFT_RISK_SETS],
            "dilution_factor": 1.05,
            "levels": 20,
            "correlation": [[1.0, 0.0], [0.0, 1.0]],
            "lookahead": 1.5,
            "duration": 10.0,
        },
        "simulation": {"traces": 500, "seed": 0},
        "output": {"directory": "out", "format": "records"},
    }


# ---------------------------------------------------------------------------
# field helpers


def _block(raw: dict, name: str) -> dict:
    val = raw.get(name, {})
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError(name, "must be a mapping")
    return val


def _check_keys(block: dict, path: str, allowed):
    for key in block:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _number(block: dict, key: str, path: str, default, *, integer=False, lo=None, hi=None, lo_open=False,
            hi_open=False, allow_none=False):
    val = block.get(key, default)
    full = f"{path}.{key}"
    if val is None:
        if allow_none:
            return None
        raise ConfigError(full, "is required")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(full, f"must be a number, got {val!r}")
    if integer and (not float(val).is_integer()):
        raise ConfigError(full, "must be an integer")
    if not np.isfinite(val):
        raise ConfigError(full, "must be finite")
    if lo is not None and (val < lo or (lo_open and val == lo)):
        raise ConfigError(full, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and (val > hi or (hi_open and val == hi)):
        raise ConfigError(full, f"must be {'<' if hi_open else '<='} {hi}")
    return int(val) if integer else float(val)


def _matrix(val, path: str, shape=None) -> np.ndarray:
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "must be a numeric array") from None
    if shape is not None and arr.shape != shape:
        raise ConfigError(path, f"must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(path, "must contain finite numbers")
    return arr


def _psd(val, path: str, n: int) -> np.ndarray:
    arr = _matrix(val, path, (n, n))
    if np.max(np.abs(arr - arr.T), initial=0.0) > 1e-9:
        raise ConfigError(path, "must be symmetric")
    if np.linalg.eigvalsh(0.5 * (arr + arr.T)).min() < -1e-12:
        raise ConfigError(path, "must be positive semidefinite")
    return arr


def _tuple(arr: np.ndarray):
    return tuple(map(tuple, arr)) if arr.ndim == 2 else tuple(arr.tolist())


# ---------------------------------------------------------------------------
# system models


FORKLIFT_PARAM_KEYS = ("L", "v0", "dt", "k_g", "k_s", "P_w", "P_v", "lane_offset")
LINEAR_PARAM_KEYS = ("A", "B", "C", "K", "P_w", "P_v")


def _build_forklift(params: dict) -> SystemModel:
    path = "system.params"
    _check_keys(params, path, FORKLIFT_PARAM_KEYS)
    kw = {}
    for key in ("L", "v0", "dt", "k_g", "k_s"):
        if key in params:
            kw[key] = _number(params, key, path, None, lo=0.0, lo_open=True)
    if "lane_offset" in params:
        kw["lane_offset"] = _number(params, "lane_offset", path, None)
    for key in ("P_w", "P_v"):
        if key in params:
            kw[key] = _tuple(_psd(params[key], f"{path}.{key}", 2))
    try:
        return forklift_model(ForkliftParams(**kw))
    except InvalidArgumentError as exc:
        raise ConfigError(path, str(exc)) from None


def linear_model(A, B, C, K, P_w, P_v) -> SystemModel:
    """``x' = A x + B u``, ``y = C x``, ``u = -K x_hat``."""
    A, B, C, K = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, C, K))
    f = affine_map(np.hstack([A, B]), name="linear_dynamics")
    h = affine_map(C, name="linear_sensor")
    g = affine_map(-K, name="linear_feedback")
    return SystemModel(f, h, g, P_w, P_v)


def _build_linear(params: dict) -> SystemModel:
    path = "system.params"
    _check_keys(params, path, LINEAR_PARAM_KEYS)
    for key in LINEAR_PARAM_KEYS:
        if key not in params:
            raise ConfigError(f"{path}.{key}", "is required for the linear model")
    A = _matrix(params["A"], f"{path}.A")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"{path}.A", "must be square")
    n = A.shape[0]
    B = _matrix(params["B"], f"{path}.B")
    if B.ndim != 2 or B.shape[0] != n:
        raise ConfigError(f"{path}.B", f"must have {n} rows")
    C = _matrix(params["C"], f"{path}.C")
    if C.ndim != 2 or C.shape[1] != n:
        raise ConfigError(f"{path}.C", f"must have {n} columns")
    K = _matrix(params["K"], f"{path}.K", (B.shape[1], n))
    P_w = _psd(params["P_w"], f"{path}.P_w", n)
    P_v = _psd(params["P_v"], f"{path}.P_v", C.shape[0])
    return linear_model(A, B, C, K, P_w, P_v)


MODELS = {"forklift": _build_forklift, "linear": _build_linear}


# ---------------------------------------------------------------------------
# top level


def parse_config(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    _check_keys(raw, "<root>", ("system", "estimator", "reach", "risk", "simulation", "output"))

    sys_raw = _block(raw, "system")
    _check_keys(sys_raw, "system", ("model", "params"))
    name = sys_raw.get("model", "forklift")
    if name not in MODELS:
        raise ConfigError("system.model", f"unknown model {name!r}; choose from {sorted(MODELS)}")
    params = sys_raw.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("system.params", "must be a mapping")
    model = MODELS[name](params)
    system = SystemConfig(name, dict(params))

    est_raw = _block(raw, "estimator")
    _check_keys(est_raw, "estimator", ("x0", "P0", "detector_confidence", "detector_threshold"))
    defaults = EstimatorConfig()
    x0 = _matrix(est_raw.get("x0", defaults.x0), "estimator.x0", (model.n_x,))
    P0 = _psd(est_raw.get("P0", defaults.P0), "estimator.P0", model.n_x)
    det_conf = _number(est_raw, "detector_confidence", "estimator", 0.95, lo=0.0, hi=1.0, lo_open=True, hi_open=True)
    det_thr = _number(est_raw, "detector_threshold", "estimator", None, lo=0.0, allow_none=True)
    estimator = EstimatorConfig(_tuple(x0), _tuple(P0), det_conf, det_thr)

    r_raw = _block(raw, "reach")
    _check_keys(r_raw, "reach", ("taylor_order", "horizon", "dt", "noise_confidence", "generator_budget",
                                 "divergence_cap", "ellipsoid_mix"))
    budget = _number(r_raw, "generator_budget", "reach", None, integer=True, lo=model.n_x, allow_none=True)
    reach = ReachConfig(
        taylor_order=_number(r_raw, "taylor_order", "reach", 2, integer=True, lo=1),
        horizon=_number(r_raw, "horizon", "reach", 10, integer=True, lo=1),
        noise_confidence=_number(r_raw, "noise_confidence", "reach", 0.95, lo=0.0, hi=1.0, lo_open=True, hi_open=True),
        detector_confidence=det_conf,
        generator_budget=budget,
        dt=_number(r_raw, "dt", "reach", params.get("dt", 0.1) if name == "forklift" else 0.1, lo=0.0, lo_open=True),
        divergence_cap=_number(r_raw, "divergence_cap", "reach", 1e3, lo=0.0, lo_open=True),
        detector_threshold=det_thr,
        ellipsoid_mix=_number(r_raw, "ellipsoid_mix", "reach", 1.0, lo=0.0, hi=1.0),
    )
    if name == "forklift" and "dt" in params and "dt" in r_raw and float(params["dt"]) != reach.dt:
        raise ConfigError("reach.dt", "must equal system.params.dt")

    k_raw = _block(raw, "risk")
    _check_keys(k_raw, "risk", ("sets", "dilution_factor", "levels", "correlation", "lookahead", "duration"))
    sets_raw = k_raw.get("sets", [])
    if not isinstance(sets_raw, list):
        raise ConfigError("risk.sets", "must be a list")
    risk_sets = []
    for i, s in enumerate(sets_raw):
        path = f"risk.sets[{i}]"
        if not isinstance(s, dict):
            raise ConfigError(path, "must be a mapping")
        _check_keys(s, path, ("name", "lower", "upper", "risk", "subspace"))
        sub = s.get("subspace", [0, 1])
        if not isinstance(sub, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in sub):
            raise ConfigError(f"{path}.subspace", "must be a list of integers")
        if any(v < 0 or v >= model.n_x for v in sub):
            raise ConfigError(f"{path}.subspace", f"indices must lie in [0, {model.n_x})")
        lower = _matrix(s.get("lower"), f"{path}.lower", (len(sub),))
        upper = _matrix(s.get("upper"), f"{path}.upper", (len(sub),))
        if np.any(lower > upper):
            raise ConfigError(f"{path}.upper", "must be >= lower")
        risk_val = _number(s, "risk", path, None, lo=0.0)
        try:
            risk_sets.append(RiskSet.from_box(lower, upper, risk_val, str(s.get("name", f"event{i}")), tuple(sub)))
        except InvalidArgumentError as exc:
            raise ConfigError(path, str(exc)) from None
    factor = _number(k_raw, "dilution_factor", "risk", 1.05, lo=1.0, lo_open=True)
    levels = _number(k_raw, "levels", "risk", 20, integer=True, lo=0)
    corr_raw = k_raw.get("correlation")
    m = len(risk_sets)
    if corr_raw is None:
        corr = np.eye(m)
    else:
        corr = _matrix(corr_raw, "risk.correlation")
        if m == 0 and corr.size == 0:
            corr = np.zeros((0, 0))
        try:
            corr = validate_correlation(corr, m)
        except InvalidArgumentError as exc:
            raise ConfigError("risk.correlation", str(exc)) from None
    lookahead = _number(k_raw, "lookahead", "risk", 1.5, lo=0.0, lo_open=True)
    duration = _number(k_raw, "duration", "risk", 10.0, lo=0.0)
    risk = RiskConfig(tuple(risk_sets), factor, levels, _tuple(corr) if corr.size else (), lookahead, duration)
    field_ = build_field(risk_sets, factor, levels, corr) if m else RiskField((), factor, np.zeros((0, 0)))

    s_raw = _block(raw, "simulation")
    _check_keys(s_raw, "simulation", ("traces", "seed"))
    simulation = SimulationConfig(
        _number(s_raw, "traces", "simulation", 500, integer=True, lo=1),
        _number(s_raw, "seed", "simulation", 0, integer=True, lo=0),
    )

    o_raw = _block(raw, "output")
    _check_keys(o_raw, "output", ("directory", "format"))
    fmt = o_raw.get("format", "records")
    if fmt not in OUTPUT_FORMATS:
        raise ConfigError("output.format", f"must be one of {OUTPUT_FORMATS}")
    directory = o_raw.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory", "must be a non-empty string")
    output = OutputConfig(directory, fmt)

    return ExperimentConfig(system, estimator, reach, risk, simulation, output, model, field_)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from None
    return parse_config(raw if raw is not None else {})
