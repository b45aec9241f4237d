"""
Extended Kalman filter baseline.

Same state, process model, observation model and noise covariances as the
UKF in :mod:`triad_ahrs.ukf`; only the way uncertainty is pushed through the
models differs (first-order Jacobians instead of sigma points).
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .attitude import SMALL_ANGLE, _transition_matrix
from .ukf import (
    STATUS_OK,
    STATUS_SINGULAR_INNOVATION,
    FilterState,
    NoiseCovariances,
    SingularInnovationCovariance,
    _condition_ok,
    _normalize_quaternion_block,
    _symmetrize,
)

EkfState = FilterState


@njit(cache=True)
def _xi_matrix(q):
    """4x3 matrix with ``Omega(w) q = 0.5 Xi(q) w``."""
    q0, q1, q2, q3 = q[0], q[1], q[2], q[3]
    X = np.empty((4, 3))
    X[0, 0], X[0, 1], X[0, 2] = -q1, -q2, -q3
    X[1, 0], X[1, 1], X[1, 2] = q0, -q3, q2
    X[2, 0], X[2, 1], X[2, 2] = q3, q0, -q1
    X[3, 0], X[3, 1], X[3, 2] = -q2, q1, q0
    return X


@njit(cache=True)
def _process_jacobian(x, w_s, dt):
    q = x[:4]
    w = w_s - x[4:7]
    F = np.eye(7)
    F[:4, :4] = _transition_matrix(w, dt)

    # q+ = cos(h) q + (sin(h)/h) (dt/2) Xi(q) w, h = |w| dt / 2
    h = 0.5 * dt * math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if h < 1e-4:
        h2 = h * h
        sinc = 1.0 - h2 / 6.0 + h2 * h2 / 120.0
        dsinc_coef = -1.0 / 3.0 + h2 / 30.0
    else:
        sinc = math.sin(h) / h
        dsinc_coef = (h * math.cos(h) - math.sin(h)) / (h * h * h)
    # dh/dw_j = dt^2 w_j / (4 h); both derivative factors carry the 1/h so
    # they are written with the h-free coefficients above
    Xi = _xi_matrix(q)
    Xw = Xi @ w
    dq_dw = np.empty((4, 3))
    for j in range(3):
        g = 0.25 * dt * dt * w[j]
        dc = -sinc * g
        ds = dsinc_coef * g
        for i in range(4):
            dq_dw[i, j] = q[i] * dc + 0.5 * dt * (Xi[i, j] * sinc + Xw[i] * ds)
    F[:4, 4:7] = -dq_dw
    return F


@njit(cache=True)
def _observation_jacobian(x):
    q0, q1, q2, q3 = x[0], x[1], x[2], x[3]
    H = np.zeros((4, 7))
    H[0, 0], H[0, 1], H[0, 2], H[0, 3] = -2 * q2, 2 * q3, -2 * q0, 2 * q1
    H[1, 0], H[1, 1], H[1, 2], H[1, 3] = 2 * q1, 2 * q0, 2 * q3, 2 * q2
    H[2, 0], H[2, 1], H[2, 2], H[2, 3] = 2 * q0, 2 * q1, -2 * q2, -2 * q3
    H[3, 0], H[3, 1], H[3, 2], H[3, 3] = 2 * q3, 2 * q2, 2 * q1, 2 * q0
    return H


@njit(cache=True)
def _observation(x):
    q0, q1, q2, q3 = x[0], x[1], x[2], x[3]
    y = np.empty(4)
    y[0] = 2.0 * (q1 * q3 - q0 * q2)
    y[1] = 2.0 * (q2 * q3 + q0 * q1)
    y[2] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    y[3] = 2.0 * (q1 * q2 + q0 * q3)
    return y


@njit(cache=True)
def _linear_predict(x_new, P, F, Q):
    return x_new, _symmetrize(F @ P @ F.T + Q)


@njit(cache=True)
def _linear_update(x, P, H, y, y_hat, R):
    S = _symmetrize(H @ P @ H.T + R)
    if not _condition_ok(S):
        return x, P, STATUS_SINGULAR_INNOVATION
    PHt = P @ H.T
    K = np.linalg.solve(S, PHt.T).T
    x_new = x + K @ (y - y_hat)
    P_new = _symmetrize(P - K @ S @ K.T)
    return x_new, P_new, STATUS_OK


@njit(cache=True)
def _ekf_propagate(x, P, w_s, dt, Q):
    F = _process_jacobian(x, w_s, dt)
    x_new = x.copy()
    x_new[:4] = np.ascontiguousarray(F[:4, :4]) @ x[:4]
    x_new, P_new = _linear_predict(x_new, P, F, Q)
    return _normalize_quaternion_block(x_new), P_new, STATUS_OK


@njit(cache=True)
def _ekf_correct(x, P, y, R):
    xn, Pn, st = _linear_update(x, P, _observation_jacobian(x), y, _observation(x), R)
    if st != STATUS_OK:
        return x, P, st
    return _normalize_quaternion_block(xn), Pn, st


def process_jacobian(x: ArrayLike, w_measured: ArrayLike, dt: float) -> NDArray[np.float64]:
    """
    Jacobian of the discrete attitude/bias step with respect to the state.

    The top-left 4x4 block is the quaternion transition matrix for the
    bias-corrected rate, the top-right 4x3 block is ``dq+/db`` (the bias enters
    through ``w = w_s - b``), the bias block is the identity and the
    bottom-left block is zero.
    """
    return _process_jacobian(
        np.asarray(x, dtype=np.float64), np.asarray(w_measured, dtype=np.float64), float(dt)
    )


def observation_jacobian(x: ArrayLike) -> NDArray[np.float64]:
    """4x7 Jacobian of ``(c13, c23, c11, c12)``; the bias columns are zero."""
    return _observation_jacobian(np.asarray(x, dtype=np.float64))


def observation(x: ArrayLike) -> NDArray[np.float64]:
    """``(c13, c23, c11, c12)`` evaluated on the quaternion part of ``x``."""
    return _observation(np.asarray(x, dtype=np.float64))


def ekf_propagate(
    state: FilterState,
    w_measured: ArrayLike,
    dt: float,
    noise: NoiseCovariances | None = None,
    process: Callable | None = None,
    jacobian: Callable | None = None,
) -> FilterState:
    """
    EKF time update, ``x+ = f(x)`` and ``P+ = F P F.T + Q``.

    ``process(x, u, dt)`` and ``jacobian(x, u, dt)`` replace the attitude
    model when given (used for linear test systems; no renormalisation).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    noise = noise or NoiseCovariances.default()
    u = np.asarray(w_measured, dtype=np.float64)
    if process is None:
        x, P, _ = _ekf_propagate(*state.arrays(), u, float(dt), noise.Q)
    else:
        F = np.asarray(jacobian(state.x, u, dt), dtype=np.float64)
        x_new = np.asarray(process(state.x, u, dt), dtype=np.float64)
        x, P = _linear_predict(x_new, state.P.copy(), F, noise.Q)
    return FilterState(x, P)


def ekf_correct(
    state: FilterState,
    y: ArrayLike,
    noise: NoiseCovariances | None = None,
    measure: Callable | None = None,
    jacobian: Callable | None = None,
) -> FilterState:
    """
    EKF measurement update with ``y = (c13, c23, c11, c12)``.

    Skips (with a :class:`~triad_ahrs.ukf.SingularInnovationCovariance`
    warning) under the same conditioning rule as the UKF.
    """
    noise = noise or NoiseCovariances.default()
    ya = np.asarray(y, dtype=np.float64)
    if measure is None:
        x, P, status = _ekf_correct(*state.arrays(), ya, noise.R)
    else:
        H = np.atleast_2d(np.asarray(jacobian(state.x), dtype=np.float64))
        y_hat = np.atleast_1d(np.asarray(measure(state.x), dtype=np.float64))
        x, P, status = _linear_update(*state.arrays(), H, ya, y_hat, noise.R)
    if status == STATUS_SINGULAR_INNOVATION:
        warnings.warn("innovation covariance is singular; correction skipped", SingularInnovationCovariance)
        return state
    return FilterState(x, P)
