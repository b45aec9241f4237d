"""
The full AHRS loop: 100 Hz propagation, 1 Hz TRIAD correction.

:func:`replay` runs a :class:`~triad_ahrs.logio.SensorLog` through either
estimator. :func:`step_scheduler` exposes the frame-by-frame decisions
(propagate, correct, or skip with a reason) without running a filter.

Per frame ``k`` after the first:

* the estimate is propagated from ``t[k-1]`` to ``t[k]`` with the gyro sample
  of frame ``k-1`` (the rate held over that interval);
* accelerometer and gyro samples go through the same low-pass filter, so
  the centrifugal term computed from the filtered rates matches the one
  contained in the filtered specific force; the magnetometer is used raw;
* if the frame carries a GPS delivery, the pair criteria are evaluated on the
  filtered specific force and the magnetic field. Unless they say skip, the
  centrifugal term ``(w_lp - b) x (U, 0, 0)`` is removed, TRIAD is solved and
  the filter is corrected with ``(c13, c23, c11, c12)``.

The first frame initialises the filter from a TRIAD fix of its raw
accelerometer and magnetometer samples, with zero bias.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .attitude import _dcm_to_euler, _euler_to_quaternion, _quaternion_to_euler
from .ekf import _ekf_correct, _ekf_propagate
from .logio import SensorLog
from .triad import (
    GRAVITY,
    PairSelection,
    _lowpass_coefficient,
    _observe,
    _select_pairs,
    _subtract_centrifugal,
    _triad_dcm,
    _triad_observation,
)
from .ukf import (
    STATUS_CHOLESKY_FAILED,
    STATUS_REPAIRED,
    STATUS_SINGULAR_INNOVATION,
    NoiseCovariances,
    UkfParams,
    _ukf_correct,
    _ukf_propagate,
    make_weights,
)

logger = logging.getLogger(__name__)

# magnetic field in gauss, NED; mid-latitude Europe
DEFAULT_MAG_REF = (0.2570, -0.0040, 0.3710)

ACTION_REJECT = -1
ACTION_INIT = 0
ACTION_PROPAGATE = 1
ACTION_CORRECT = 2
ACTION_SKIP = 3

ACTION_NAMES = {
    ACTION_REJECT: "reject",
    ACTION_INIT: "initialize",
    ACTION_PROPAGATE: "propagate",
    ACTION_CORRECT: "propagate_and_correct",
    ACTION_SKIP: "propagate_skip_correction",
}

# stable strings, written to replay output
SKIP_REASONS = (
    "",
    "mag_unreliable",
    "acrobatic",
    "degenerate_pair",
    "singular_innovation",
    "covariance_failure",
)
REASON_NONE = 0
REASON_MAG_UNRELIABLE = 1
REASON_ACROBATIC = 2
REASON_DEGENERATE = 3
REASON_SINGULAR = 4
REASON_COVARIANCE = 5


@dataclass(frozen=True)
class AhrsConfig:
    """
    Everything the estimator needs besides the sensor data.

    Noise values are in filter units: ``q_quat`` and ``q_bias`` are the
    per-step process noise variances of each quaternion and bias component,
    ``r_obs`` the variance of each observed DCM term, ``p0_bias`` in
    (rad/s)^2.
    """

    estimator: str = "ukf"
    ukf: UkfParams = UkfParams()
    q_quat: float = 1e-6
    q_bias: float = 0.0
    r_obs: float = 2.5e-3
    p0_quat: float = 1e-2
    p0_bias: float = math.radians(5.0) ** 2
    mag_ref: tuple[float, float, float] = DEFAULT_MAG_REF
    gravity: float = GRAVITY
    lowpass_cutoff_hz: float = 10.0

    def __post_init__(self):
        if self.estimator not in ("ukf", "ekf"):
            raise ValueError(f"estimator must be 'ukf' or 'ekf', got {self.estimator!r}")
        if self.q_quat < 0 or self.q_bias < 0 or self.p0_quat < 0 or self.p0_bias < 0:
            raise ValueError("process noise and prior variances must be non-negative")
        if self.r_obs <= 0:
            raise ValueError("r_obs must be positive")
        if len(self.mag_ref) != 3 or not any(self.mag_ref):
            raise ValueError("mag_ref must be a non-zero 3-vector")
        if self.gravity <= 0 or self.lowpass_cutoff_hz <= 0:
            raise ValueError("gravity and lowpass cutoff must be positive")

    @property
    def noise(self) -> NoiseCovariances:
        return NoiseCovariances.default(self.q_quat, self.q_bias, self.r_obs)


class Action(NamedTuple):
    kind: str
    reason: str = ""


@dataclass
class ReplayResult:
    """Per-frame estimator output; rejected frames hold NaN estimates."""

    t: NDArray[np.float64]
    x: NDArray[np.float64]
    action: NDArray[np.int8]
    reason: NDArray[np.int8]
    selection: NDArray[np.int8]
    repairs: int
    cholesky_failures: int
    warnings: list[str] = field(default_factory=list)

    @property
    def valid(self) -> NDArray[np.bool_]:
        return self.action != ACTION_REJECT

    @property
    def euler(self) -> NDArray[np.float64]:
        out = np.full((len(self.t), 3), np.nan)
        for k in np.flatnonzero(self.valid):
            out[k] = _quaternion_to_euler(self.x[k, :4])
        return out

    @property
    def bias(self) -> NDArray[np.float64]:
        return self.x[:, 4:7]

    @property
    def correction_applied(self) -> NDArray[np.bool_]:
        return self.action == ACTION_CORRECT

    def skip_reasons(self) -> list[str]:
        return [SKIP_REASONS[r] for r in self.reason]

    def actions(self) -> list[Action]:
        return [Action(ACTION_NAMES[int(a)], SKIP_REASONS[int(r)]) for a, r in zip(self.action, self.reason)]

    def count(self, action: int) -> int:
        return int(np.sum(self.action == action))


@njit(cache=True)
def _norm3(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


@njit(cache=True)
def _static_alignment(accel, mag, mag_ref):
    A, ok = _triad_dcm(-accel, mag, np.array([0.0, 0.0, 1.0]), mag_ref)
    e = _dcm_to_euler(A)
    return _euler_to_quaternion(e[0], e[1], e[2]), ok


@njit(cache=True)
def _replay_kernel(
    t, gyro, accel, mag, gps_speed, use_ekf, mag_ref, gravity, cutoff_hz,
    Wm, Wc, gamma, Q, R, p0_quat, p0_bias,
):  # fmt: skip
    n = t.size
    xs = np.full((n, 7), np.nan)
    action = np.full(n, ACTION_REJECT, dtype=np.int8)
    reason = np.zeros(n, dtype=np.int8)
    selection = np.full(n, -1, dtype=np.int8)
    repairs = 0
    failures = 0

    mag_ref_norm = _norm3(mag_ref)
    x = np.zeros(7)
    P = np.zeros((7, 7))
    a_lp = np.zeros(3)
    w_lp = np.zeros(3)
    w_prev = np.zeros(3)
    t_prev = 0.0
    started = False

    for k in range(n):
        if not started:
            q, ok = _static_alignment(accel[k], mag[k], mag_ref)
            if not ok:
                reason[k] = REASON_DEGENERATE
                continue
            x[:4] = q
            x[4:] = 0.0
            P[:, :] = 0.0
            for i in range(4):
                P[i, i] = p0_quat
            for i in range(4, 7):
                P[i, i] = p0_bias
            a_lp[:] = accel[k]
            w_lp[:] = gyro[k]
            w_prev[:] = gyro[k]
            t_prev = t[k]
            started = True
            action[k] = ACTION_INIT
            xs[k] = x
            continue

        if not t[k] > t_prev:
            continue
        dt = t[k] - t_prev

        if use_ekf:
            x, P, status = _ekf_propagate(x, P, w_prev, dt, Q)
        else:
            x, P, status = _ukf_propagate(x, P, w_prev, dt, Wm, Wc, gamma, Q)
        if status == STATUS_CHOLESKY_FAILED:
            failures += 1
        elif status == STATUS_REPAIRED:
            repairs += 1

        c = _lowpass_coefficient(cutoff_hz, 1.0 / dt)
        a_lp += c * (accel[k] - a_lp)
        w_lp += c * (gyro[k] - w_lp)
        action[k] = ACTION_PROPAGATE

        if not math.isnan(gps_speed[k]):
            sel = _select_pairs(_norm3(a_lp), _norm3(mag[k]), mag_ref_norm, gravity)
            selection[k] = sel
            if sel == 2:
                action[k] = ACTION_SKIP
                reason[k] = REASON_MAG_UNRELIABLE
            elif sel == 3:
                action[k] = ACTION_SKIP
                reason[k] = REASON_ACROBATIC
            else:
                speed = max(gps_speed[k], 0.0)
                g_obs = -_subtract_centrifugal(a_lp, w_lp - x[4:7], speed)
                A, ok = _triad_observation(sel, g_obs, mag[k], mag_ref)
                if not ok:
                    action[k] = ACTION_SKIP
                    reason[k] = REASON_DEGENERATE
                else:
                    y = _observe(A)
                    if use_ekf:
                        x, P, st = _ekf_correct(x, P, y, R)
                    else:
                        x, P, st = _ukf_correct(x, P, y, Wm, Wc, gamma, R)
                    if st == STATUS_SINGULAR_INNOVATION:
                        action[k] = ACTION_SKIP
                        reason[k] = REASON_SINGULAR
                    elif st == STATUS_CHOLESKY_FAILED:
                        failures += 1
                        action[k] = ACTION_SKIP
                        reason[k] = REASON_COVARIANCE
                    else:
                        if st == STATUS_REPAIRED:
                            repairs += 1
                        action[k] = ACTION_CORRECT

        xs[k] = x
        t_prev = t[k]
        w_prev[:] = gyro[k]

    return xs, action, reason, selection, repairs, failures


def _reject_messages(log: SensorLog, action: NDArray[np.int8], reason: NDArray[np.int8]) -> list[str]:
    msgs = []
    started = False
    for k in range(len(log)):
        if action[k] == ACTION_INIT:
            started = True
        elif action[k] == ACTION_REJECT:
            line = log.line_of(k)
            if started:
                msgs.append(f"line {line}: timestamp {float(log.t[k])!r} is not increasing; frame rejected")
            else:
                msgs.append(f"line {line}: cannot align (degenerate TRIAD pair); frame rejected")
    return msgs


def replay(log: SensorLog, config: AhrsConfig = AhrsConfig()) -> ReplayResult:
    """
    Run the estimator over a whole log.

    Frames whose timestamp does not increase are rejected, logged with their
    line number and otherwise ignored.
    """
    Wm, Wc = make_weights(config.ukf)
    noise = config.noise
    xs, action, reason, selection, repairs, failures = _replay_kernel(
        np.ascontiguousarray(log.t, dtype=np.float64),
        np.ascontiguousarray(log.gyro, dtype=np.float64),
        np.ascontiguousarray(log.accel, dtype=np.float64),
        np.ascontiguousarray(log.mag, dtype=np.float64),
        np.ascontiguousarray(log.gps_speed, dtype=np.float64),
        config.estimator == "ekf",
        np.asarray(config.mag_ref, dtype=np.float64),
        float(config.gravity),
        float(config.lowpass_cutoff_hz),
        Wm,
        Wc,
        float(config.ukf.gamma),
        noise.Q,
        noise.R,
        float(config.p0_quat),
        float(config.p0_bias),
    )
    msgs = _reject_messages(log, action, reason)
    for m in msgs:
        logger.warning(m)
    return ReplayResult(log.t.copy(), xs, action, reason, selection, int(repairs), int(failures), msgs)


def step_scheduler(log: SensorLog, config: AhrsConfig = AhrsConfig()) -> Iterator[Action]:
    """
    Frame-by-frame schedule without running a filter.

    Yields ``initialize`` for the first frame, ``reject`` for frames whose
    timestamp does not increase, and otherwise one of ``propagate``,
    ``propagate_and_correct`` or ``propagate_skip_correction`` with the
    criteria's skip reason. A correction is scheduled only on frames that
    carry a fresh GPS delivery.

    The replay may still skip a scheduled correction when TRIAD is degenerate
    or the innovation covariance is singular; those outcomes depend on the
    filter state and only show up in :class:`ReplayResult`.
    """
    m_ref_norm = float(np.linalg.norm(config.mag_ref))
    t_prev = None
    a_lp = None
    for frame in log.frames():
        if t_prev is None:
            t_prev, a_lp = frame.t, frame.accel
            yield Action("initialize")
            continue
        if not frame.t > t_prev:
            yield Action("reject")
            continue
        c = _lowpass_coefficient(config.lowpass_cutoff_hz, 1.0 / (frame.t - t_prev))
        a_lp = a_lp + c * (frame.accel - a_lp)
        t_prev = frame.t
        if frame.gps_speed is None or frame.gps_age > 0.0:
            yield Action("propagate")
            continue
        sel = PairSelection(
            _select_pairs(float(np.linalg.norm(a_lp)), float(np.linalg.norm(frame.mag)), m_ref_norm, config.gravity)
        )
        if sel == PairSelection.SKIP_MAG_UNRELIABLE:
            yield Action("propagate_skip_correction", "mag_unreliable")
        elif sel == PairSelection.SKIP_ACROBATIC:
            yield Action("propagate_skip_correction", "acrobatic")
        else:
            yield Action("propagate_and_correct")
