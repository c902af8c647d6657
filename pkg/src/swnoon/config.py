"""Experiment configuration: JSON file, ``--set`` overrides and validation."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .detection import DetectorModel
from .dynamics import RB87_D1_WAVELENGTH, MotionParams, pump_velocity
from .herald import WriteParams

SEED_ENV = "SWNOON_SEED"


class ConfigError(ValueError):
    """Invalid configuration.  ``problems`` lists one message per offending field."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    # Excitation probability per write pulse; the experimental value is not published.
    chi: float = 0.01
    cutoff: int = 4
    lambda_m: float = RB87_D1_WAVELENGTH
    theta_rad: float = math.radians(0.6)
    v0_mps: float = 0.03
    pump_power_mw: float = 6.0
    # (v_max m/s, P_sat mW), P_sat from a fit to the measured period table with v_max fixed.
    pump_model: Tuple[float, float] = (0.09, 1.88)
    tau_s: float = 200e-6
    gamma0: float = 0.15
    gamma_b: float = 0.002
    phi_stab_rad: float = 0.0
    trials_per_point: int = 10_000
    # (start s, stop s, count)
    dt_grid: Tuple[float, float, int] = (0.0, 600e-6, 25)
    order: int = 1
    noon_N: int = 2
    seed: int = 20080715
    detector_mode: str = "threshold"
    max_attempts: int = 10**9
    fit_tau: bool = False
    fit_restarts: int = 5

    # -- derived views --------------------------------------------------------

    @property
    def vp_mps(self) -> float:
        v_max, p_sat = self.pump_model
        return pump_velocity(self.pump_power_mw, v_max, p_sat)

    @property
    def v_c(self) -> float:
        return self.v0_mps + self.vp_mps

    @property
    def number_resolving(self) -> bool:
        return self.detector_mode == "number-resolving"

    def motion(self) -> MotionParams:
        return MotionParams(
            lambda_m=self.lambda_m,
            theta=self.theta_rad,
            v0=self.v0_mps,
            vp=self.vp_mps,
            tau=self.tau_s,
            phi_stab=self.phi_stab_rad,
        )

    def detector(self) -> DetectorModel:
        return DetectorModel(self.gamma0, self.gamma_b, self.number_resolving)

    def write_params(self) -> WriteParams:
        return WriteParams(self.chi, self.cutoff)

    def grid(self) -> np.ndarray:
        start, stop, count = self.dt_grid
        return np.linspace(start, stop, int(count))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["pump_model"] = {"v_max": self.pump_model[0], "p_sat": self.pump_model[1]}
        d["dt_grid"] = {"start": self.dt_grid[0], "stop": self.dt_grid[1], "count": self.dt_grid[2]}
        return d

    def with_(self, **changes) -> "ExperimentConfig":
        return validate(replace(self, **changes))


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _check(cfg: ExperimentConfig) -> List[str]:
    problems = []

    def need(cond, name, msg):
        if not cond:
            problems.append(f"{name}: {msg}")

    need(0.0 <= cfg.chi < 1.0, "chi", f"must lie in [0, 1), got {cfg.chi}")
    need(isinstance(cfg.cutoff, int) and cfg.cutoff >= 1, "cutoff", f"must be an integer >= 1, got {cfg.cutoff}")
    need(isinstance(cfg.noon_N, int) and cfg.noon_N >= 1, "noon_N", f"must be an integer >= 1, got {cfg.noon_N}")
    if isinstance(cfg.cutoff, int) and isinstance(cfg.noon_N, int):
        need(cfg.cutoff >= cfg.noon_N + 2, "cutoff", f"must be >= noon_N + 2 = {cfg.noon_N + 2}, got {cfg.cutoff}")
    need(cfg.lambda_m > 0, "lambda_m", f"must be positive, got {cfg.lambda_m}")
    need(abs(cfg.theta_rad) < math.pi / 2, "theta_rad", f"must satisfy |theta| < pi/2, got {cfg.theta_rad}")
    need(cfg.v0_mps >= 0, "v0_mps", f"must be non-negative, got {cfg.v0_mps}")
    need(cfg.pump_power_mw >= 0, "pump_power_mw", f"must be non-negative, got {cfg.pump_power_mw}")
    if len(cfg.pump_model) != 2:
        problems.append("pump_model: needs (v_max, p_sat)")
    else:
        need(cfg.pump_model[0] >= 0, "pump_model.v_max", f"must be non-negative, got {cfg.pump_model[0]}")
        need(cfg.pump_model[1] > 0, "pump_model.p_sat", f"must be positive, got {cfg.pump_model[1]}")
    need(cfg.tau_s > 0, "tau_s", f"must be positive, got {cfg.tau_s}")
    need(0 < cfg.gamma0 <= 1, "gamma0", f"must lie in (0, 1], got {cfg.gamma0}")
    need(0 <= cfg.gamma_b < 1, "gamma_b", f"must lie in [0, 1), got {cfg.gamma_b}")
    need(
        isinstance(cfg.trials_per_point, int) and cfg.trials_per_point >= 1,
        "trials_per_point",
        f"must be an integer >= 1, got {cfg.trials_per_point}",
    )
    if len(cfg.dt_grid) != 3:
        problems.append("dt_grid: needs (start, stop, count)")
    else:
        start, stop, count = cfg.dt_grid
        need(isinstance(count, int) and count >= 1, "dt_grid.count", f"must be an integer >= 1, got {count}")
        need(start >= 0, "dt_grid.start", f"must be non-negative, got {start}")
        if isinstance(count, int) and count > 1:
            need(stop > start, "dt_grid.stop", f"must exceed start={start} for a strictly increasing grid, got {stop}")
    need(cfg.order in (1, 2), "order", f"must be 1 or 2, got {cfg.order}")
    need(
        cfg.detector_mode in ("threshold", "number-resolving"),
        "detector_mode",
        f"must be 'threshold' or 'number-resolving', got {cfg.detector_mode!r}",
    )
    need(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed", f"must be a non-negative integer, got {cfg.seed}")
    need(
        isinstance(cfg.max_attempts, int) and cfg.max_attempts >= 1,
        "max_attempts",
        f"must be an integer >= 1, got {cfg.max_attempts}",
    )
    need(isinstance(cfg.fit_restarts, int) and cfg.fit_restarts >= 1, "fit_restarts", "must be an integer >= 1")
    return problems


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    problems = _check(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _coerce(name: str, value: Any, problems: List[str]) -> Any:
    if name == "pump_model":
        if isinstance(value, dict):
            extra = set(value) - {"v_max", "p_sat"}
            if extra:
                problems.append(f"pump_model: unknown keys {sorted(extra)}")
            return (float(value.get("v_max", 0.09)), float(value.get("p_sat", 1.88)))
        return tuple(float(v) for v in value)
    if name == "dt_grid":
        if isinstance(value, dict):
            extra = set(value) - {"start", "stop", "count"}
            if extra:
                problems.append(f"dt_grid: unknown keys {sorted(extra)}")
            value = (value.get("start", 0.0), value.get("stop", 600e-6), value.get("count", 25))
        start, stop, count = value
        if isinstance(count, float) and count.is_integer():
            count = int(count)
        return (float(start), float(stop), count)
    default = getattr(ExperimentConfig, name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            problems.append(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{name}: expected a number, got {value!r}")
            return value
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        problems.append(f"{name}: expected a string, got {value!r}")
    return value


def from_dict(data: Dict[str, Any], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    problems: List[str] = []
    changes = {}
    for key, value in data.items():
        if key not in _FIELD_TYPES:
            problems.append(f"{key}: unknown configuration key")
            continue
        try:
            changes[key] = _coerce(key, value, problems)
        except (TypeError, ValueError) as exc:
            problems.append(f"{key}: cannot interpret {value!r} ({exc})")
    if problems:
        raise ConfigError(problems)
    return validate(replace(base, **changes))


def parse_override(item: str) -> Tuple[str, Any]:
    """``key=value`` with a JSON value (bare strings allowed); dotted keys reach sub-fields."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError([f"--set {item!r}: expected key=value"])
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    data = json.loads(json.dumps(data))
    for item in overrides:
        key, value = parse_override(item)
        head, _, sub = key.partition(".")
        if sub:
            node = data.get(head)
            if not isinstance(node, dict):
                node = ExperimentConfig().to_dict().get(head)
                if not isinstance(node, dict):
                    raise ConfigError([f"{key}: {head} has no sub-fields"])
                node = dict(node)
            node[sub] = value
            data[head] = node
        else:
            data[key] = value
    return data


def load(path: Optional[str] = None, overrides: Iterable[str] = (), env=None) -> ExperimentConfig:
    """Read a JSON config (defaults when ``path`` is None), apply overrides and $SWNOON_SEED."""
    env = os.environ if env is None else env
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError([f"config: cannot read {path}: {exc.strerror}"]) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: {path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from None
        if not isinstance(data, dict):
            raise ConfigError([f"config: {path}: top level must be a JSON object"])
    data = apply_overrides(data, overrides)
    if env.get(SEED_ENV):
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError([f"seed: ${SEED_ENV}={env[SEED_ENV]!r} is not an integer"]) from None
    return from_dict(data)

