"""
Trial evaluation and tolerance sweeps.

A trial corrupts a truth trajectory, replays it through an estimator and
compares the estimate with the truth Euler angles. A sweep bisects the
magnitude of one error source (all others zero) for the largest value at
which a required fraction of trials stays inside the error thresholds.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .attitude import wrap_angle
from .pipeline import (
    ACTION_CORRECT,
    REASON_ACROBATIC,
    REASON_COVARIANCE,
    REASON_DEGENERATE,
    REASON_MAG_UNRELIABLE,
    REASON_SINGULAR,
    SKIP_REASONS,
    AhrsConfig,
    ReplayResult,
    replay,
)
from .sim import CorruptionConfig, Trajectory, corrupt

DIVERGENCE_DEG = 45.0
DEFAULT_THRESHOLDS_DEG = (1.0, 1.0, 4.0)
DEFAULT_SETTLE_S = 120.0

# channel -> (CorruptionConfig field, axis or None for all axes / scalar)
CHANNELS = {
    "gyro_p": ("gyro", 0),
    "gyro_q": ("gyro", 1),
    "gyro_r": ("gyro", 2),
    "accel": ("accel", None),
    "mag": ("mag", None),
    "gps": ("gps", None),
}
_FIELDS = {
    ("gyro", "bias"): "gyro_bias_dps",
    ("gyro", "noise"): "gyro_noise_dps",
    ("accel", "bias"): "accel_bias_mps2",
    ("accel", "noise"): "accel_noise_mps2",
    ("mag", "bias"): "mag_bias_mgauss",
    ("mag", "noise"): "mag_noise_mgauss",
    ("gps", "bias"): "gps_bias_mps",
    ("gps", "noise"): "gps_noise_mps",
}


class NonMonotonePassRegion(UserWarning):
    pass


@dataclass(frozen=True)
class ErrorReport:
    """
    Attitude error statistics of one trial, in degrees.

    Errors are counted from ``settle_time_s`` onwards; yaw error is the
    shortest angular distance.
    """

    max_error_deg: tuple[float, float, float]
    rms_error_deg: tuple[float, float, float]
    skip_counts: dict[str, int]
    corrections: int
    diverged: bool
    settle_time_s: float

    def passes(self, thresholds_deg: Sequence[float] = DEFAULT_THRESHOLDS_DEG) -> bool:
        if self.diverged:
            return False
        return all(e <= lim for e, lim in zip(self.max_error_deg, thresholds_deg))


def attitude_errors(estimate_euler: NDArray[np.float64], truth_euler: NDArray[np.float64]) -> NDArray[np.float64]:
    """Per-frame estimate minus truth in rad, every axis wrapped to (-pi, pi]."""
    return wrap_angle(np.asarray(estimate_euler) - np.asarray(truth_euler))


def error_report(
    result: ReplayResult, truth_euler: NDArray[np.float64], settle_time_s: float = DEFAULT_SETTLE_S
) -> ErrorReport:
    """Summarise a replay against truth Euler angles."""
    err = np.degrees(np.abs(attitude_errors(result.euler, truth_euler)))
    window = result.valid & (result.t - result.t[0] >= settle_time_s)
    if np.any(window):
        e = err[window]
        max_err = tuple(float(v) for v in np.max(e, axis=0))
        rms_err = tuple(float(v) for v in np.sqrt(np.mean(e * e, axis=0)))
    else:
        max_err = rms_err = (math.nan,) * 3
    # divergence is judged on the whole run: a settle window must not hide it
    whole = err[result.valid]
    diverged = bool(
        result.cholesky_failures >= 2
        or not np.all(np.isfinite(whole))
        or (whole.size and np.max(whole) > DIVERGENCE_DEG)
    )
    skips = {
        SKIP_REASONS[r]: int(np.sum(result.reason == r))
        for r in (REASON_MAG_UNRELIABLE, REASON_ACROBATIC, REASON_DEGENERATE, REASON_SINGULAR, REASON_COVARIANCE)
    }
    return ErrorReport(
        max_err, rms_err, skips, int(np.sum(result.action == ACTION_CORRECT)), diverged, float(settle_time_s)
    )


def run_trial(
    trajectory: Trajectory,
    cfg: CorruptionConfig,
    estimator: str = "ukf",
    ahrs: AhrsConfig | None = None,
    settle_time_s: float = DEFAULT_SETTLE_S,
) -> ErrorReport:
    """Corrupt ``trajectory`` with ``cfg``, replay it and score the estimate."""
    ahrs = dataclasses.replace(ahrs or AhrsConfig(), estimator=estimator)
    ahrs = dataclasses.replace(ahrs, mag_ref=tuple(trajectory.mag_ref), gravity=trajectory.gravity)
    log = corrupt(trajectory, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = replay(log, ahrs)
    return error_report(result, log.truth_euler, settle_time_s)


@dataclass(frozen=True)
class ToleranceSweepSpec:
    """
    Bisection over the magnitude of one error source.

    ``parameter`` is ``"<channel>_<kind>"`` with channel one of ``gyro_p``,
    ``gyro_q``, ``gyro_r``, ``accel``, ``mag``, ``gps`` and kind ``bias`` or
    ``noise``. Units follow :class:`~triad_ahrs.sim.CorruptionConfig`
    (deg/s, m/s^2, mG, m/s). A bias of magnitude ``M`` is applied with a
    random sign per axis and trial.
    """

    parameter: str
    low: float
    high: float
    trials: int = 10
    iterations: int = 5
    pass_fraction: float = 0.9
    thresholds_deg: tuple[float, float, float] = DEFAULT_THRESHOLDS_DEG
    settle_time_s: float = DEFAULT_SETTLE_S
    seed: int = 0

    def __post_init__(self):
        channel, _, kind = self.parameter.rpartition("_")
        if channel not in CHANNELS or kind not in ("bias", "noise"):
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0.0 <= self.low < self.high:
            raise ValueError("need 0 <= low < high")
        if not 0.0 < self.pass_fraction <= 1.0:
            raise ValueError("pass_fraction must be in (0, 1]")

    @property
    def channel(self) -> str:
        return self.parameter.rpartition("_")[0]

    @property
    def kind(self) -> str:
        return self.parameter.rpartition("_")[2]

    @property
    def required_passes(self) -> int:
        return math.ceil(self.pass_fraction * self.trials - 1e-9)


@dataclass
class SweepResult:
    parameter: str
    estimator: str
    tolerance: float
    trials: int
    pass_fraction: float
    non_monotone: bool = False
    evaluations: list[tuple[float, int, int]] = field(default_factory=list)


def trial_config(spec: ToleranceSweepSpec, magnitude: float, trial: int) -> CorruptionConfig:
    """Corruption for one trial at one swept magnitude (all else zero)."""
    seed = spec.seed * 100003 + trial
    base, axis = CHANNELS[spec.channel]
    name = _FIELDS[(base, spec.kind)]
    if base == "gps":
        value = magnitude
        if spec.kind == "bias":
            value *= 1.0 if np.random.default_rng([seed, 1]).random() < 0.5 else -1.0
    else:
        value = np.zeros(3)
        idx = [0, 1, 2] if axis is None else [axis]
        value[idx] = magnitude
        if spec.kind == "bias":
            value *= np.where(np.random.default_rng([seed, 1]).random(3) < 0.5, 1.0, -1.0)
        value = tuple(float(v) for v in value)
    return CorruptionConfig.zero(seed=seed, **{name: value})


def tolerance_sweep(
    spec: ToleranceSweepSpec,
    estimator: str,
    trajectory: Trajectory,
    ahrs: AhrsConfig | None = None,
    trial_fn: Callable[[CorruptionConfig], ErrorReport] | None = None,
) -> SweepResult:
    """
    Largest swept magnitude at which enough trials pass.

    Trial ``i`` uses the same seed at every magnitude, so pass/fail is
    usually monotone. A point stops early once its outcome is decided; the
    returned point is always run to all ``trials`` so its pass fraction is
    exact. When
    the upper bound passes it is returned directly; when the lower bound
    fails the lower bound is returned with its (failing) pass fraction.
    After bisection one extra point halfway below the tolerance is checked;
    if it fails, :class:`NonMonotonePassRegion` is warned and flagged.
    """
    if trial_fn is None:

        def trial_fn(cfg: CorruptionConfig) -> ErrorReport:
            return run_trial(trajectory, cfg, estimator, ahrs, spec.settle_time_s)

    outcomes: dict[float, list[bool]] = {}

    def evaluate(m: float, complete: bool = False) -> tuple[bool, float]:
        need = spec.required_passes
        done = outcomes.setdefault(m, [])
        for i in range(len(done), spec.trials):
            passed = sum(done)
            if not complete and (passed >= need or spec.trials - (len(done) - passed) < need):
                break
            done.append(trial_fn(trial_config(spec, m, i)).passes(spec.thresholds_deg))
        passed = sum(done)
        return passed >= need, passed / len(done)

    def result(m: float, non_monotone: bool = False) -> SweepResult:
        _, frac = evaluate(m, complete=True)
        evaluations = [(v, sum(o), len(o)) for v, o in outcomes.items()]
        return SweepResult(spec.parameter, estimator, m, spec.trials, frac, non_monotone, evaluations)

    if evaluate(spec.high)[0]:
        return result(spec.high)
    if not evaluate(spec.low)[0]:
        return result(spec.low)

    lo, hi = spec.low, spec.high
    for _ in range(spec.iterations):
        mid = 0.5 * (lo + hi)
        if evaluate(mid)[0]:
            lo = mid
        else:
            hi = mid

    non_monotone = False
    if lo > spec.low:
        probe = 0.5 * (spec.low + lo)
        if not evaluate(probe)[0]:
            non_monotone = True
            warnings.warn(
                f"{spec.parameter} ({estimator}): fails at {probe:g} below passing {lo:g}", NonMonotonePassRegion
            )
    return result(lo, non_monotone)


def measure_triad_noise(
    trajectory: Trajectory,
    cfg: CorruptionConfig,
    trials: int = 10,
    ahrs: AhrsConfig | None = None,
) -> NDArray[np.float64]:
    """
    Empirical variance of each TRIAD observation component ``(c13, c23, c11, c12)``.

    The observation is built exactly as in the replay (low-pass, centrifugal
    correction with the true rates, criteria-selected pairs) at every GPS
    delivery and compared with the same quantity computed from truth. Meant
    for level or steady trajectories when choosing the observation noise.
    """
    from .attitude import _quaternion_to_dcm
    from .triad import _lowpass_coefficient, _observe, _select_pairs, _subtract_centrifugal, _triad_observation

    ahrs = ahrs or AhrsConfig()
    mag_ref = np.asarray(trajectory.mag_ref)
    resid = []
    for i in range(trials):
        log = corrupt(trajectory, dataclasses.replace(cfg, seed=cfg.seed + i))
        c = _lowpass_coefficient(ahrs.lowpass_cutoff_hz, 1.0 / trajectory.dt)
        a_lp, w_lp = log.accel[0].copy(), log.gyro[0].copy()
        bias = np.radians(cfg.gyro_bias_dps)
        for k in range(1, len(log)):
            a_lp += c * (log.accel[k] - a_lp)
            w_lp += c * (log.gyro[k] - w_lp)
            if math.isnan(log.gps_speed[k]):
                continue
            sel = _select_pairs(
                float(np.linalg.norm(a_lp)), float(np.linalg.norm(log.mag[k])), float(np.linalg.norm(mag_ref)),
                trajectory.gravity,
            )  # fmt: skip
            if sel >= 2:
                continue
            g_obs = -_subtract_centrifugal(a_lp, w_lp - bias, log.gps_speed[k])
            A, ok = _triad_observation(sel, g_obs, log.mag[k], mag_ref)
            if ok:
                resid.append(_observe(A) - _observe(_quaternion_to_dcm(trajectory.q[k])))
    r = np.array(resid)
    return np.var(r, axis=0) + np.mean(r, axis=0) ** 2
