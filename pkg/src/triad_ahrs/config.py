"""
Run configuration files.

Three formats:

* the run configuration, an INI file with unit-suffixed keys (every key is
  optional; unknown sections or keys are errors)::

      [estimator]
      estimator = ukf
      alpha = 1e-3
      beta = 2
      kappa = 0
      q_quat = 1e-6
      q_bias_rad2ps2 = 0
      r_obs = 2.5e-3
      p0_quat = 1e-2
      p0_bias_sigma_dps = 5

      [environment]
      mag_ref_gauss = 0.2570, -0.0040, 0.3710
      gravity_mps2 = 9.80665

      [triad]
      lowpass_cutoff_hz = 10

      [schedule]
      sample_rate_hz = 100
      gps_rate_hz = 1

      [sensors]
      gyro_bias_dps = 3, 3, 3
      gyro_noise_dps = 1, 1, 1
      accel_bias_mps2 = 0.05, 0.05, 0.05
      accel_noise_mps2 = 0.009, 0.009, 0.009
      accel_noise_corner_hz = 20
      mag_bias_mgauss = 4, 4, 4
      mag_noise_mgauss = 1.25, 1.25, 1.25
      gps_bias_mps = 0.5
      gps_noise_mps = 1.5
      gps_delay_s = 1

      [run]
      seed = 0
      settle_time_s = 120
      speed_mps = 20

* a maneuver script (JSON), see :func:`parse_script`;
* a sweep specification (JSON), see :func:`parse_sweep`.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .montecarlo import DEFAULT_SETTLE_S, DEFAULT_THRESHOLDS_DEG, ToleranceSweepSpec
from .pipeline import AhrsConfig
from .sim import CoordinatedTurn, CorruptionConfig, Gust, Maneuver, PitchDoublet, SteadyFlight
from .ukf import InvalidParams, UkfParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    ahrs: AhrsConfig = field(default_factory=AhrsConfig)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    sample_rate_hz: float = 100.0
    settle_time_s: float = DEFAULT_SETTLE_S
    speed_mps: float = 20.0

    @property
    def seed(self) -> int:
        return self.corruption.seed

    def with_seed(self, seed: int) -> RunConfig:
        return dataclasses.replace(self, corruption=dataclasses.replace(self.corruption, seed=seed))

    def with_estimator(self, estimator: str) -> RunConfig:
        return dataclasses.replace(self, ahrs=dataclasses.replace(self.ahrs, estimator=estimator))


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"{text!r} is not finite")
    return v


def _vec3(text: str) -> tuple[float, float, float]:
    parts = [p for p in text.replace(",", " ").split()]
    if len(parts) == 1:
        return (_float(parts[0]),) * 3
    if len(parts) != 3:
        raise ValueError(f"expected 1 or 3 numbers, got {len(parts)}")
    return tuple(_float(p) for p in parts)


def _estimator(text: str) -> str:
    text = text.strip().lower()
    if text not in ("ukf", "ekf"):
        raise ValueError("must be ukf or ekf")
    return text


# section -> key -> (parser, destination)
_SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], str]]] = {
    "estimator": {
        "estimator": (_estimator, "ahrs.estimator"),
        "alpha": (_float, "ukf.alpha"),
        "beta": (_float, "ukf.beta"),
        "kappa": (_float, "ukf.kappa"),
        "q_quat": (_float, "ahrs.q_quat"),
        "q_bias_rad2ps2": (_float, "ahrs.q_bias"),
        "r_obs": (_float, "ahrs.r_obs"),
        "p0_quat": (_float, "ahrs.p0_quat"),
        "p0_bias_sigma_dps": (_float, "p0_bias_sigma_dps"),
    },
    "environment": {
        "mag_ref_gauss": (_vec3, "ahrs.mag_ref"),
        "gravity_mps2": (_float, "ahrs.gravity"),
    },
    "triad": {"lowpass_cutoff_hz": (_float, "ahrs.lowpass_cutoff_hz")},
    "schedule": {
        "sample_rate_hz": (_float, "run.sample_rate_hz"),
        "gps_rate_hz": (_float, "sensors.gps_rate_hz"),
    },
    "sensors": {
        "gyro_bias_dps": (_vec3, "sensors.gyro_bias_dps"),
        "gyro_noise_dps": (_vec3, "sensors.gyro_noise_dps"),
        "accel_bias_mps2": (_vec3, "sensors.accel_bias_mps2"),
        "accel_noise_mps2": (_vec3, "sensors.accel_noise_mps2"),
        "accel_noise_corner_hz": (_float, "sensors.accel_noise_corner_hz"),
        "mag_bias_mgauss": (_vec3, "sensors.mag_bias_mgauss"),
        "mag_noise_mgauss": (_vec3, "sensors.mag_noise_mgauss"),
        "gps_bias_mps": (_float, "sensors.gps_bias_mps"),
        "gps_noise_mps": (_float, "sensors.gps_noise_mps"),
        "gps_delay_s": (_float, "sensors.gps_delay_s"),
    },
    "run": {
        "seed": (int, "sensors.seed"),
        "settle_time_s": (_float, "run.settle_time_s"),
        "speed_mps": (_float, "run.speed_mps"),
    },
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse and validate an INI run configuration.

    Raises
    ------
    ConfigError
        Unknown section or key, unparsable value, or a value rejected by the
        estimator, simulator or schedule invariants.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__", inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    groups: dict[str, dict[str, Any]] = {"ahrs": {}, "ukf": {}, "sensors": {}, "run": {}}
    p0_sigma = None
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            parse, dest = _SCHEMA[section][key]
            try:
                value = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: [{section}] {key}: {exc}") from None
            if dest == "p0_bias_sigma_dps":
                p0_sigma = value
                continue
            group, name = dest.split(".")
            groups[group][name] = value

    try:
        ukf = UkfParams(**groups["ukf"])
        ahrs_kw = dict(groups["ahrs"], ukf=ukf)
        if p0_sigma is not None:
            if p0_sigma < 0:
                raise ValueError("p0_bias_sigma_dps must be non-negative")
            ahrs_kw["p0_bias"] = math.radians(p0_sigma) ** 2
        ahrs = AhrsConfig(**ahrs_kw)
        corruption = CorruptionConfig(**groups["sensors"])
        run = RunConfig(ahrs, corruption, **groups["run"])
    except (ValueError, InvalidParams) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not run.sample_rate_hz > 0 or not run.speed_mps >= 0 or not run.settle_time_s >= 0:
        raise ConfigError(f"{source}: sample_rate_hz must be positive; speed and settle time non-negative")
    if not 2.0 * ahrs.lowpass_cutoff_hz < run.sample_rate_hz:
        raise ConfigError(f"{source}: lowpass_cutoff_hz must be below half the sample rate")
    return run


def load_config(path: str | Path | None) -> RunConfig:
    """Read a run configuration; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# --------------------------------------------------------------------------
# maneuver scripts
# --------------------------------------------------------------------------

_MANEUVER_KEYS = {
    "steady": {"duration_s", "speed_mps", "mag_disturbance"},
    "turn": {"duration_s", "yaw_rate_dps", "bank_deg", "mag_disturbance"},
    "doublet": {"duration_s", "amplitude_deg", "mag_disturbance"},
    "gust": {"duration_s", "rms_dps", "mag_disturbance"},
}


def _maneuver(item: Any, i: int) -> Maneuver:
    if not isinstance(item, dict) or "type" not in item:
        raise ConfigError(f"maneuver {i}: expected an object with a 'type'")
    kind = item["type"]
    if kind not in _MANEUVER_KEYS:
        raise ConfigError(f"maneuver {i}: unknown type {kind!r}")
    extra = set(item) - _MANEUVER_KEYS[kind] - {"type"}
    if extra:
        raise ConfigError(f"maneuver {i}: unknown keys {sorted(extra)}")
    try:
        duration = float(item["duration_s"])
        gain = float(item.get("mag_disturbance", 1.0))
        if not duration >= 0 or not math.isfinite(duration) or not gain > 0:
            raise ValueError("duration_s must be non-negative and mag_disturbance positive")
        if kind == "steady":
            speed = item.get("speed_mps")
            return SteadyFlight(duration, None if speed is None else float(speed), gain)
        if kind == "turn":
            bank = item.get("bank_deg")
            return CoordinatedTurn(
                duration, math.radians(float(item["yaw_rate_dps"])), None if bank is None else math.radians(bank), gain
            )
        if kind == "doublet":
            return PitchDoublet(duration, math.radians(float(item["amplitude_deg"])), gain)
        return Gust(duration, math.radians(float(item["rms_dps"])), gain)
    except KeyError as exc:
        raise ConfigError(f"maneuver {i}: missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"maneuver {i}: {exc}") from None


def parse_script(data: Any) -> dict[str, Any]:
    """
    Validate a maneuver script.

    ``{"initial_euler_deg": [r, p, y], "seed": 0, "maneuvers": [...]}`` with
    maneuvers such as ``{"type": "turn", "duration_s": 20, "yaw_rate_dps": -16,
    "bank_deg": -30}``. Types: ``steady`` (``speed_mps``), ``turn``
    (``yaw_rate_dps``, ``bank_deg``), ``doublet`` (``amplitude_deg``), ``gust``
    (``rms_dps``); all accept ``mag_disturbance``.

    Returns keyword arguments for :func:`~triad_ahrs.sim.generate_trajectory`
    (without ``dt``, ``speed``, ``mag_ref`` and ``gravity``).
    """
    if not isinstance(data, dict):
        raise ConfigError("script must be a JSON object")
    extra = set(data) - {"maneuvers", "initial_euler_deg", "seed"}
    if extra:
        raise ConfigError(f"script: unknown keys {sorted(extra)}")
    items = data.get("maneuvers")
    if not isinstance(items, list) or not items:
        raise ConfigError("script: 'maneuvers' must be a non-empty list")
    script = [_maneuver(m, i) for i, m in enumerate(items)]
    if sum(m.duration for m in script) <= 0:
        raise ConfigError("script: total duration is zero")
    try:
        euler = tuple(math.radians(float(v)) for v in data.get("initial_euler_deg", (0.0, 0.0, 0.0)))
        seed = int(data.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"script: {exc}") from None
    if len(euler) != 3:
        raise ConfigError("script: initial_euler_deg needs three angles")
    return {"script": script, "initial_euler": euler, "seed": seed}


def script_to_json(script: list[Maneuver], seed: int = 0) -> dict[str, Any]:
    """Inverse of :func:`parse_script` (angles in degrees)."""
    out = []
    for m in script:
        if isinstance(m, SteadyFlight):
            d = {"type": "steady", "duration_s": m.duration}
            if m.speed is not None:
                d["speed_mps"] = m.speed
        elif isinstance(m, CoordinatedTurn):
            d = {"type": "turn", "duration_s": m.duration, "yaw_rate_dps": math.degrees(m.yaw_rate)}
            if m.bank is not None:
                d["bank_deg"] = math.degrees(m.bank)
        elif isinstance(m, PitchDoublet):
            d = {"type": "doublet", "duration_s": m.duration, "amplitude_deg": math.degrees(m.amplitude)}
        else:
            d = {"type": "gust", "duration_s": m.duration, "rms_dps": math.degrees(m.rms)}
        if m.mag_disturbance != 1.0:
            d["mag_disturbance"] = m.mag_disturbance
        out.append(d)
    return {"seed": seed, "maneuvers": out}


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None


# --------------------------------------------------------------------------
# sweep specifications
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    specs: list[ToleranceSweepSpec]
    estimators: tuple[str, ...]
    script: dict[str, Any] | None = None


def parse_sweep(data: Any) -> SweepPlan:
    """
    Validate a sweep specification.

    ::

        {"estimators": ["ukf", "ekf"], "trials": 10, "iterations": 5,
         "pass_fraction": 0.9, "thresholds_deg": [1, 1, 4], "seed": 0,
         "parameters": [{"parameter": "gyro_r_bias", "low": 0, "high": 20}],
         "script": {...optional maneuver script...}}

    Per-parameter entries may override ``trials``, ``iterations``,
    ``pass_fraction``, ``thresholds_deg`` and ``seed``.
    """
    if not isinstance(data, dict):
        raise ConfigError("sweep spec must be a JSON object")
    common_keys = {"trials", "iterations", "pass_fraction", "thresholds_deg", "seed", "settle_time_s"}
    extra = set(data) - common_keys - {"estimators", "parameters", "script"}
    if extra:
        raise ConfigError(f"sweep spec: unknown keys {sorted(extra)}")
    estimators = data.get("estimators", ["ukf", "ekf"])
    if not isinstance(estimators, list) or not estimators or any(e not in ("ukf", "ekf") for e in estimators):
        raise ConfigError("sweep spec: 'estimators' must be a non-empty list of 'ukf'/'ekf'")
    params = data.get("parameters")
    if not isinstance(params, list) or not params:
        raise ConfigError("sweep spec: 'parameters' must be a non-empty list")
    common = {k: data[k] for k in common_keys if k in data}
    specs = []
    for i, p in enumerate(params):
        if not isinstance(p, dict):
            raise ConfigError(f"sweep parameter {i}: expected an object")
        bad = set(p) - common_keys - {"parameter", "low", "high"}
        if bad:
            raise ConfigError(f"sweep parameter {i}: unknown keys {sorted(bad)}")
        kw = dict(common, **p)
        try:
            if "thresholds_deg" in kw:
                kw["thresholds_deg"] = tuple(float(v) for v in kw["thresholds_deg"])
                if len(kw["thresholds_deg"]) != 3:
                    raise ValueError("thresholds_deg needs three values")
            specs.append(ToleranceSweepSpec(**kw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep parameter {i}: {exc}") from None
    script = data.get("script")
    if script is not None:
        parse_script(script)
    return SweepPlan(specs, tuple(estimators), script)


DEFAULT_SWEEP = {
    "estimators": ["ukf", "ekf"],
    "trials": 10,
    "iterations": 5,
    "pass_fraction": 0.9,
    "thresholds_deg": list(DEFAULT_THRESHOLDS_DEG),
    "parameters": [
        {"parameter": "gyro_p_bias", "low": 0.0, "high": 20.0},
        {"parameter": "gyro_q_bias", "low": 0.0, "high": 20.0},
        {"parameter": "gyro_r_bias", "low": 0.0, "high": 20.0},
        {"parameter": "accel_bias", "low": 0.0, "high": 1.0},
        {"parameter": "mag_bias", "low": 0.0, "high": 50.0},
        {"parameter": "gps_bias", "low": 0.0, "high": 10.0},
    ],
}
