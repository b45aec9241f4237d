"""
Kinematic truth trajectories and sensor corruption.

A trajectory is driven by a list of maneuvers. Each maneuver sets roll and
pitch targets and a yaw rate; Euler rate commands are converted to body
rates at the current attitude, held constant over one step and integrated
exactly with the quaternion transition matrix. Body-frame specific force
and magnetic field are synthesised from the resulting attitude:

* specific force ``f = w x (U, 0, 0) + (dU/dt, 0, 0) - A (0, 0, g)``
* magnetic field ``m = A m_ref`` (times the maneuver's disturbance gain)

where ``A`` is the NED-to-body DCM. Velocity is along the body x axis with
magnitude ``U``, which is exactly what the estimator's centrifugal
correction assumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence, Union

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .attitude import _euler_to_quaternion, _propagate_quaternion, _quaternion_to_dcm, _quaternion_to_euler
from .logio import SensorLog
from .pipeline import DEFAULT_MAG_REF
from .triad import GRAVITY

ATTITUDE_TIME_CONSTANT = 1.0  # s
MAX_ROLL_RATE = math.radians(10.0)
MAX_PITCH_RATE = math.radians(20.0)
MAX_SPEED_RATE = 1.0  # m/s^2
GUST_TIME_CONSTANT = 0.5  # s


class EmptyScript(ValueError):
    pass


@dataclass(frozen=True)
class SteadyFlight:
    """Wings level, pitch zero, constant heading; optionally change speed (m/s)."""

    duration: float
    speed: float | None = None
    mag_disturbance: float = 1.0


@dataclass(frozen=True)
class CoordinatedTurn:
    """
    Constant yaw rate (rad/s) at the given bank (rad).

    Without an explicit bank the coordinated value ``atan(yaw_rate U / g)``
    is used, which gives a load factor of ``1 / cos(bank)``.
    """

    duration: float
    yaw_rate: float
    bank: float | None = None
    mag_disturbance: float = 1.0


@dataclass(frozen=True)
class PitchDoublet:
    """Pitch up to ``+amplitude`` (rad), then down to ``-amplitude``, then level."""

    duration: float
    amplitude: float
    mag_disturbance: float = 1.0


@dataclass(frozen=True)
class Gust:
    """Level flight with band-limited random body-rate disturbances of ``rms`` rad/s."""

    duration: float
    rms: float
    mag_disturbance: float = 1.0


Maneuver = Union[SteadyFlight, CoordinatedTurn, PitchDoublet, Gust]

_KIND = {SteadyFlight: 0, CoordinatedTurn: 1, PitchDoublet: 2, Gust: 3}


class TruthSample(NamedTuple):
    t: float
    attitude: NDArray[np.float64]
    omega: NDArray[np.float64]
    accel: NDArray[np.float64]
    mag: NDArray[np.float64]
    speed: float


@dataclass
class Trajectory:
    """
    Truth time series at a fixed step.

    ``omega[k]`` is the body rate held over ``[t[k], t[k+1])``; ``q[k+1]`` is
    ``q[k]`` propagated through that interval exactly.
    """

    t: NDArray[np.float64]
    q: NDArray[np.float64]
    omega: NDArray[np.float64]
    accel: NDArray[np.float64]
    mag: NDArray[np.float64]
    speed: NDArray[np.float64]
    mag_gain: NDArray[np.float64]
    mag_ref: NDArray[np.float64]
    gravity: float = GRAVITY
    segments: NDArray[np.int64] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def euler(self) -> NDArray[np.float64]:
        return np.array([_quaternion_to_euler(q) for q in self.q])

    def samples(self) -> Iterator[TruthSample]:
        for k in range(len(self)):
            yield TruthSample(
                float(self.t[k]),
                self.q[k].copy(),
                self.omega[k].copy(),
                self.accel[k].copy(),
                self.mag[k].copy(),
                float(self.speed[k]),
            )


@njit(cache=True)
def _clip(v, lim):
    return min(max(v, -lim), lim)


@njit(cache=True)
def _generate(kinds, durations, p1, p2, mag_gain_in, dt, speed0, euler0, mag_ref, gravity, gust_noise):
    seg_steps = np.empty(kinds.size, dtype=np.int64)
    n = 1
    for i in range(kinds.size):
        seg_steps[i] = int(round(durations[i] / dt))
        n += seg_steps[i]

    t = np.empty(n)
    q = np.empty((n, 4))
    omega = np.zeros((n, 3))
    accel = np.empty((n, 3))
    mag = np.empty((n, 3))
    speed = np.empty(n)
    dspeed = np.zeros(n)
    mag_gain = np.ones(n)
    segment = np.zeros(n, dtype=np.int64)

    q[0] = _euler_to_quaternion(euler0[0], euler0[1], euler0[2])
    U = speed0
    gust = np.zeros(3)
    g_decay = math.exp(-dt / GUST_TIME_CONSTANT)
    g_gain = math.sqrt(1.0 - g_decay * g_decay)

    k = 0
    for s in range(kinds.size):
        for j in range(seg_steps[s]):
            tau = j * dt
            kind = kinds[s]
            e = _quaternion_to_euler(q[k])
            roll_t = 0.0
            pitch_t = 0.0
            yaw_rate = 0.0
            U_target = U
            gust_rms = 0.0
            if kind == 0:
                if not math.isnan(p1[s]):
                    U_target = p1[s]
            elif kind == 1:
                yaw_rate = p1[s]
                roll_t = p2[s] if not math.isnan(p2[s]) else math.atan(yaw_rate * U / gravity)
            elif kind == 2:
                third = durations[s] / 3.0
                if tau < third:
                    pitch_t = p1[s]
                elif tau < 2.0 * third:
                    pitch_t = -p1[s]
            else:
                gust_rms = p1[s]

            droll = _clip((roll_t - e[0]) / ATTITUDE_TIME_CONSTANT, MAX_ROLL_RATE)
            dpitch = _clip((pitch_t - e[1]) / ATTITUDE_TIME_CONSTANT, MAX_PITCH_RATE)
            sr, cr = math.sin(e[0]), math.cos(e[0])
            sp, cp = math.sin(e[1]), math.cos(e[1])
            w = np.empty(3)
            w[0] = droll - yaw_rate * sp
            w[1] = dpitch * cr + yaw_rate * sr * cp
            w[2] = -dpitch * sr + yaw_rate * cr * cp
            # gust state runs continuously so that its statistics do not
            # depend on segment boundaries; it only acts inside Gust segments
            gust = g_decay * gust + g_gain * gust_noise[k]
            w += gust_rms * gust

            dU = _clip((U_target - U) / dt, MAX_SPEED_RATE)
            omega[k] = w
            dspeed[k] = dU
            speed[k] = U
            mag_gain[k] = mag_gain_in[s]
            segment[k] = s
            t[k] = k * dt
            q[k + 1] = _propagate_quaternion(q[k], w, dt)
            U += dU * dt
            k += 1

    t[n - 1] = (n - 1) * dt
    speed[n - 1] = U
    omega[n - 1] = omega[n - 2] if n > 1 else omega[n - 1]
    mag_gain[n - 1] = mag_gain[n - 2] if n > 1 else 1.0
    segment[n - 1] = kinds.size - 1

    for k in range(n):
        A = _quaternion_to_dcm(q[k])
        w = omega[k]
        U = speed[k]
        accel[k, 0] = dspeed[k] - A[0, 2] * gravity
        accel[k, 1] = w[2] * U - A[1, 2] * gravity
        accel[k, 2] = -w[1] * U - A[2, 2] * gravity
        mag[k] = (A @ mag_ref) * mag_gain[k]
    return t, q, omega, accel, mag, speed, mag_gain, segment


def generate_trajectory(
    script: Sequence[Maneuver],
    dt: float = 0.01,
    speed: float = 20.0,
    mag_ref: Sequence[float] = DEFAULT_MAG_REF,
    gravity: float = GRAVITY,
    initial_euler: Sequence[float] = (0.0, 0.0, 0.0),
    seed: int = 0,
) -> Trajectory:
    """
    Synthesise a truth trajectory from a maneuver script.

    Parameters
    ----------
    script : sequence of maneuvers
        Flown back to back; each lasts ``round(duration / dt)`` steps.
    dt : float
        Step in seconds.
    speed : float
        Initial airspeed ``U`` in m/s.
    mag_ref : sequence of float
        NED magnetic field in gauss.
    gravity : float
        m/s^2.
    initial_euler : sequence of float
        Initial roll, pitch, yaw in rad.
    seed : int
        Seed for the gust disturbances.

    Returns
    -------
    Trajectory
        ``sum(steps) + 1`` samples, starting at ``t = 0``.

    Raises
    ------
    EmptyScript
        If ``script`` is empty or has zero total duration.
    """
    if not script:
        raise EmptyScript("maneuver script is empty")
    if not dt > 0:
        raise ValueError("dt must be positive")
    kinds = np.array([_KIND[type(m)] for m in script], dtype=np.int64)
    durations = np.array([float(m.duration) for m in script])
    if np.any(durations < 0) or not np.any(np.round(durations / dt) > 0):
        raise EmptyScript("maneuver script has no duration")
    p1 = np.full(len(script), np.nan)
    p2 = np.full(len(script), np.nan)
    for i, m in enumerate(script):
        if isinstance(m, SteadyFlight):
            p1[i] = np.nan if m.speed is None else m.speed
        elif isinstance(m, CoordinatedTurn):
            p1[i] = m.yaw_rate
            p2[i] = np.nan if m.bank is None else m.bank
        elif isinstance(m, PitchDoublet):
            p1[i] = m.amplitude
        else:
            p1[i] = m.rms
    gains = np.array([float(m.mag_disturbance) for m in script])
    n_steps = int(np.sum(np.round(durations / dt)))
    gust_noise = np.random.default_rng(seed).standard_normal((n_steps + 1, 3))
    mref = np.asarray(mag_ref, dtype=np.float64)
    t, q, omega, accel, mag, U, mag_gain, segment = _generate(
        kinds, durations, p1, p2, gains, float(dt), float(speed),
        np.asarray(initial_euler, dtype=np.float64), mref, float(gravity), gust_noise,
    )  # fmt: skip
    return Trajectory(t, q, omega, accel, mag, U, mag_gain, mref, float(gravity), segment)


def canonical_script() -> list[Maneuver]:
    """
    The reference flight used by the acceptance checks (650 s).

    Steady flight, a coordinated turn to the left at 30 deg bank, steady
    flight with gusts, two pitch doublets (the second with a magnetic
    disturbance), a coordinated turn to the right and a final steady leg.
    """
    bank = math.radians(30.0)
    rate = GRAVITY * math.tan(bank) / 20.0
    return [
        SteadyFlight(120.0),
        CoordinatedTurn(20.0, -rate, -bank),
        SteadyFlight(60.0),
        Gust(60.0, math.radians(3.0)),
        SteadyFlight(40.0),
        PitchDoublet(9.0, math.radians(15.0)),
        SteadyFlight(30.0),
        PitchDoublet(9.0, math.radians(15.0), mag_disturbance=1.35),
        SteadyFlight(42.0),
        CoordinatedTurn(20.0, rate, bank),
        SteadyFlight(60.0),
        Gust(60.0, math.radians(3.0)),
        SteadyFlight(120.0),
    ]


# --------------------------------------------------------------------------
# corruption
# --------------------------------------------------------------------------


def _vec3(v) -> tuple[float, float, float]:
    if np.isscalar(v):
        return (float(v),) * 3
    out = tuple(float(x) for x in v)
    if len(out) != 3:
        raise ValueError("expected a scalar or a 3-vector")
    return out


@dataclass(frozen=True)
class CorruptionConfig:
    """
    Sensor error model.

    Biases are constant over a run. Gyro and magnetometer noise is white;
    accelerometer noise is white noise passed through a first-order
    high-pass filter at ``accel_noise_corner_hz`` and rescaled so that its
    standard deviation equals ``accel_noise_mps2``. GPS speed is delivered at
    ``gps_rate_hz`` and every delivered sample is ``gps_delay_s`` old.

    The defaults are typical MEMS values: 3 deg/s gyro bias with 1 deg/s
    noise, 0.05 m/s^2 accelerometer bias with 0.009 m/s^2 noise, 4 mG
    magnetometer bias with 1.25 mG noise and 0.5 m/s GPS bias with 1.5 m/s
    noise.
    """

    gyro_bias_dps: tuple[float, float, float] = (3.0, 3.0, 3.0)
    gyro_noise_dps: tuple[float, float, float] = (1.0, 1.0, 1.0)
    accel_bias_mps2: tuple[float, float, float] = (0.05, 0.05, 0.05)
    accel_noise_mps2: tuple[float, float, float] = (0.009, 0.009, 0.009)
    accel_noise_corner_hz: float = 20.0
    mag_bias_mgauss: tuple[float, float, float] = (4.0, 4.0, 4.0)
    mag_noise_mgauss: tuple[float, float, float] = (1.25, 1.25, 1.25)
    gps_bias_mps: float = 0.5
    gps_noise_mps: float = 1.5
    gps_delay_s: float = 1.0
    gps_rate_hz: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gyro_bias_dps", "gyro_noise_dps", "accel_bias_mps2", "accel_noise_mps2",
                     "mag_bias_mgauss", "mag_noise_mgauss"):  # fmt: skip
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        sigmas = (*self.gyro_noise_dps, *self.accel_noise_mps2, *self.mag_noise_mgauss, self.gps_noise_mps)
        if min(sigmas) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.gps_delay_s < 0:
            raise ValueError("gps_delay_s must be non-negative")
        if self.gps_rate_hz <= 0 or self.accel_noise_corner_hz <= 0:
            raise ValueError("gps_rate_hz and accel_noise_corner_hz must be positive")

    @classmethod
    def zero(cls, **overrides) -> CorruptionConfig:
        """No bias, no noise, no GPS delay."""
        base = dict(
            gyro_bias_dps=0.0, gyro_noise_dps=0.0, accel_bias_mps2=0.0, accel_noise_mps2=0.0,
            mag_bias_mgauss=0.0, mag_noise_mgauss=0.0, gps_bias_mps=0.0, gps_noise_mps=0.0,
            gps_delay_s=0.0,
        )  # fmt: skip
        base.update(overrides)
        return cls(**base)


def highpass_gain(corner_hz: float, dt: float) -> tuple[float, float]:
    """
    Coefficient ``a`` of ``y[k] = a (y[k-1] + x[k] - x[k-1])`` and the
    stationary output standard deviation for unit white input,
    ``a sqrt(2 / (1 + a))``.
    """
    tau = 1.0 / (2.0 * math.pi * corner_hz)
    a = tau / (tau + dt)
    return a, a * math.sqrt(2.0 / (1.0 + a))


@njit(cache=True)
def _highpass(x, a):
    y = np.empty_like(x)
    y[0] = a * x[0]
    for k in range(1, x.shape[0]):
        y[k] = a * (y[k - 1] + x[k] - x[k - 1])
    return y


def _gps_delivery(t: NDArray[np.float64], rate_hz: float, delay: float) -> NDArray[np.bool_]:
    period = 1.0 / rate_hz
    phase = (t - t[0]) / period
    on_grid = np.abs(phase - np.round(phase)) < 1e-6
    return on_grid & (t - delay >= t[0] - 1e-9)


def corrupt(truth: Trajectory, cfg: CorruptionConfig) -> SensorLog:
    """
    Produce a sensor log from a truth trajectory.

    Independent random streams are spawned per channel from ``cfg.seed``, so
    zeroing one channel's noise leaves the others' draws unchanged, and equal
    seeds give bit-identical logs.
    """
    n = len(truth)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    d2r = math.pi / 180.0

    gyro = truth.omega + np.array(cfg.gyro_bias_dps) * d2r
    gyro = gyro + streams[0].standard_normal((n, 3)) * (np.array(cfg.gyro_noise_dps) * d2r)

    a_hp, hp_std = highpass_gain(cfg.accel_noise_corner_hz, truth.dt)
    colored = _highpass(streams[1].standard_normal((n, 3)), a_hp) / hp_std
    accel = truth.accel + np.array(cfg.accel_bias_mps2) + colored * np.array(cfg.accel_noise_mps2)

    mag = truth.mag + np.array(cfg.mag_bias_mgauss) * 1e-3
    mag = mag + streams[2].standard_normal((n, 3)) * (np.array(cfg.mag_noise_mgauss) * 1e-3)

    deliver = _gps_delivery(truth.t, cfg.gps_rate_hz, cfg.gps_delay_s)
    gps_noise = streams[3].standard_normal(n)
    epoch = truth.t - cfg.gps_delay_s
    speed_then = np.interp(epoch, truth.t, truth.speed)
    gps_speed = np.where(deliver, speed_then + cfg.gps_bias_mps + cfg.gps_noise_mps * gps_noise, np.nan)
    gps_time = np.where(deliver, epoch, np.nan)

    return SensorLog(
        t=truth.t.copy(),
        gyro=gyro,
        accel=accel,
        mag=mag,
        gps_speed=gps_speed,
        truth_euler=truth.euler,
        gps_time=gps_time,
    )
