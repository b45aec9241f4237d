"""
Quaternion, Euler angle and direction cosine matrix algebra.

Conventions
-----------
* Quaternions are scalar-first, ``q = (q0, q1, q2, q3)``, and rotate body
  vectors into the NED frame. They evolve as ``dq/dt = Omega(w) q`` with
  ``Omega`` the 4x4 skew form of the body rates (including the 1/2 factor).
* The DCM ``A`` returned by :func:`quaternion_to_dcm` maps NED vectors into
  the body frame, ``W = A V``. Its entries are ``c_ij = A[i-1, j-1]``.
* Euler angles are ``(roll, pitch, yaw)`` in radians, ZYX order.

The ``_underscore`` functions are numba kernels shared with the replay loop.
The public functions accept array-likes and return new arrays.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

GIMBAL_LOCK_MARGIN = 1e-9
SMALL_ANGLE = 1e-8


@njit(cache=True)
def _euler_to_quaternion(roll, pitch, yaw):
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    q = np.empty(4)
    q[0] = cr * cp * cy + sr * sp * sy
    q[1] = sr * cp * cy - cr * sp * sy
    q[2] = cr * sp * cy + sr * cp * sy
    q[3] = cr * cp * sy - sr * sp * cy
    return q


@njit(cache=True)
def _euler_from_dcm_terms(c11, c12, c13, c23, c33):
    s = -c13
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    e = np.empty(3)
    e[0] = math.atan2(c23, c33)
    e[1] = math.asin(s)
    e[2] = math.atan2(c12, c11)
    # atan2 may return -pi; the roll/yaw range is (-pi, pi]
    if e[0] == -math.pi:
        e[0] = math.pi
    if e[2] == -math.pi:
        e[2] = math.pi
    return e


@njit(cache=True)
def _quaternion_to_euler(q):
    q0, q1, q2, q3 = q[0], q[1], q[2], q[3]
    c11 = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    c12 = 2.0 * (q1 * q2 + q0 * q3)
    c13 = 2.0 * (q1 * q3 - q0 * q2)
    c23 = 2.0 * (q2 * q3 + q0 * q1)
    c33 = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
    return _euler_from_dcm_terms(c11, c12, c13, c23, c33)


@njit(cache=True)
def _dcm_to_euler(A):
    return _euler_from_dcm_terms(A[0, 0], A[0, 1], A[0, 2], A[1, 2], A[2, 2])


@njit(cache=True)
def _quaternion_to_dcm(q):
    q0, q1, q2, q3 = q[0], q[1], q[2], q[3]
    A = np.empty((3, 3))
    A[0, 0] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    A[0, 1] = 2.0 * (q1 * q2 + q0 * q3)
    A[0, 2] = 2.0 * (q1 * q3 - q0 * q2)
    A[1, 0] = 2.0 * (q1 * q2 - q0 * q3)
    A[1, 1] = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
    A[1, 2] = 2.0 * (q2 * q3 + q0 * q1)
    A[2, 0] = 2.0 * (q1 * q3 + q0 * q2)
    A[2, 1] = 2.0 * (q2 * q3 - q0 * q1)
    A[2, 2] = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
    return A


@njit(cache=True)
def _omega_matrix(w):
    p, q, r = 0.5 * w[0], 0.5 * w[1], 0.5 * w[2]
    M = np.empty((4, 4))
    M[0, 0], M[0, 1], M[0, 2], M[0, 3] = 0.0, -p, -q, -r
    M[1, 0], M[1, 1], M[1, 2], M[1, 3] = p, 0.0, r, -q
    M[2, 0], M[2, 1], M[2, 2], M[2, 3] = q, -r, 0.0, p
    M[3, 0], M[3, 1], M[3, 2], M[3, 3] = r, q, -p, 0.0
    return M


@njit(cache=True)
def _transition_matrix(w, dt):
    """exp(Omega(w) dt) for constant rates."""
    angle = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]) * dt
    half = 0.5 * angle
    Phi = _omega_matrix(w) * dt
    if angle < SMALL_ANGLE:
        c = 1.0
    else:
        c = math.cos(half)
        Phi *= math.sin(half) / half
    for i in range(4):
        Phi[i, i] += c
    return Phi


@njit(cache=True)
def _propagate_quaternion(q, w, dt):
    out = _transition_matrix(w, dt) @ q
    n = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    if abs(n - 1.0) > 1e-12:
        out /= n
    return out


@njit(cache=True)
def _normalize(v):
    return v / math.sqrt(np.sum(v * v))


def _vec(x: ArrayLike, n: int, name: str) -> NDArray[np.float64]:
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def euler_to_quaternion(euler: ArrayLike) -> NDArray[np.float64]:
    """
    Unit quaternion from roll, pitch and yaw.

    Parameters
    ----------
    euler : array-like, shape (3,)
        ``(roll, pitch, yaw)`` in radians.

    Returns
    -------
    numpy.ndarray, shape (4,)
        Scalar-first unit quaternion.
    """
    e = _vec(euler, 3, "euler")
    return _euler_to_quaternion(e[0], e[1], e[2])


def quaternion_to_euler(q: ArrayLike, return_degenerate: bool = False):
    """
    Roll, pitch and yaw of a unit quaternion.

    Pitch is ``-arcsin(c13)`` with the argument clamped to [-1, 1]; roll and
    yaw use the four-quadrant arctangent, so roll and yaw lie in (-pi, pi] and
    pitch in [-pi/2, pi/2].

    Parameters
    ----------
    q : array-like, shape (4,)
        Unit quaternion.
    return_degenerate : bool, default False
        Also return a flag that is True when the attitude is within
        ``GIMBAL_LOCK_MARGIN`` of pitch = +-90 deg, where roll and yaw are not
        separable.

    Returns
    -------
    euler : numpy.ndarray, shape (3,)
    degenerate : bool
        Only when ``return_degenerate`` is True.
    """
    qa = _vec(q, 4, "q")
    euler = _quaternion_to_euler(qa)
    if return_degenerate:
        s = 2.0 * (qa[1] * qa[3] - qa[0] * qa[2])
        return euler, bool(abs(s) > 1.0 - GIMBAL_LOCK_MARGIN)
    return euler


def quaternion_to_dcm(q: ArrayLike) -> NDArray[np.float64]:
    """NED-to-body direction cosine matrix of a unit quaternion."""
    return _quaternion_to_dcm(_vec(q, 4, "q"))


def dcm_to_euler(dcm: ArrayLike) -> NDArray[np.float64]:
    """Roll, pitch and yaw from a NED-to-body DCM, same formulas as the quaternion path."""
    A = np.asarray(dcm, dtype=np.float64)
    if A.shape != (3, 3):
        raise ValueError(f"dcm must have shape (3, 3), got {A.shape}")
    return _dcm_to_euler(A)


def omega_matrix(w: ArrayLike) -> NDArray[np.float64]:
    """4x4 skew matrix ``Omega`` with ``dq/dt = Omega q`` (includes the 1/2)."""
    return _omega_matrix(_vec(w, 3, "w"))


def propagate_quaternion(q: ArrayLike, w: ArrayLike, dt: float) -> NDArray[np.float64]:
    """
    Advance a quaternion through ``dt`` seconds of constant body rate.

    Evaluates ``exp(Omega dt) q`` in closed form:
    ``[I cos(a/2) + sin(a/2)/(a/2) Omega dt] q`` with ``a = |w| dt``. The
    closed form is norm preserving, so renormalisation only happens when the
    result drifts by more than 1e-12.

    Parameters
    ----------
    q : array-like, shape (4,)
        Unit quaternion at the start of the interval.
    w : array-like, shape (3,)
        Bias-corrected body rates (P, Q, R) in rad/s.
    dt : float
        Interval length in seconds, must be positive.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    return _propagate_quaternion(_vec(q, 4, "q"), _vec(w, 3, "w"), float(dt))


def correct_rates(w_measured: ArrayLike, bias: ArrayLike) -> NDArray[np.float64]:
    """Gyro rates with the bias estimate removed, ``w = w_s - b``."""
    return _vec(w_measured, 3, "w_measured") - _vec(bias, 3, "bias")


def euler_rates_to_body_rates(euler: ArrayLike, euler_rates: ArrayLike) -> NDArray[np.float64]:
    """
    Body rates (P, Q, R) that produce the given Euler angle rates.

    Inverse of the usual Euler kinematics; only used to synthesise truth
    trajectories, never to integrate attitude.
    """
    roll, pitch, _ = _vec(euler, 3, "euler")
    droll, dpitch, dyaw = _vec(euler_rates, 3, "euler_rates")
    sr, cr = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    return np.array(
        [
            droll - dyaw * sp,
            dpitch * cr + dyaw * sr * cp,
            -dpitch * sr + dyaw * cr * cp,
        ]
    )


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)
