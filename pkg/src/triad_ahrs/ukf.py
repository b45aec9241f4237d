"""
Additive-noise unscented Kalman filter over ``[q0, q1, q2, q3, bx, by, bz]``.

The filter is a value-semantics state machine: :func:`propagate` and
:func:`correct` take a :class:`FilterState` and return a new one.

Sigma points are stored row-wise, ``chi[i]`` being the i-th point, with
``chi[0] = x``, ``chi[1:L+1] = x + gamma S.T`` and ``chi[L+1:] = x - gamma S.T``
where ``S`` is the lower Cholesky factor of ``P``.

Weighted sums are evaluated relative to the central point. With the default
``alpha = 1e-3`` the central weight is about -1e6 and the direct sum
``sum(W_i chi_i)`` loses six digits; the centred form is algebraically
identical and keeps full precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .attitude import _transition_matrix

N_STATE = 7
N_OBS = 4

STATUS_OK = 0
STATUS_REPAIRED = 1
STATUS_CHOLESKY_FAILED = 2
STATUS_SINGULAR_INNOVATION = 3

MAX_INNOVATION_CONDITION = 1e12


class InvalidParams(ValueError):
    pass


class CholeskyFailure(np.linalg.LinAlgError):
    """Covariance is not positive semi-definite even after jitter repair."""


class SingularInnovationCovariance(RuntimeWarning):
    """Innovation covariance too ill-conditioned; the correction was skipped."""


@dataclass(frozen=True)
class UkfParams:
    """
    Scaled unscented transform parameters.

    ``lambda = alpha**2 (L + kappa) - L`` and ``gamma = sqrt(L + lambda)``.
    """

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    n: int = N_STATE

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidParams("alpha must lie in (0, 1]")
        if self.n + self.lam <= 0.0:
            raise InvalidParams("L + lambda must be positive")

    @property
    def lam(self) -> float:
        return self.alpha**2 * (self.n + self.kappa) - self.n

    @property
    def gamma(self) -> float:
        return math.sqrt(self.n + self.lam)


@dataclass(frozen=True)
class NoiseCovariances:
    """Process noise ``Q`` (7x7) and observation noise ``R`` (4x4)."""

    Q: NDArray[np.float64]
    R: NDArray[np.float64]

    @classmethod
    def default(cls, q_quat: float = 1e-6, q_bias: float = 0.0, r_obs: float = 2.5e-3):
        Q = np.diag([q_quat] * 4 + [q_bias] * 3)
        return cls(Q=Q, R=np.eye(N_OBS) * r_obs)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0.0:
            raise ValueError("R must be symmetric positive definite")
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < 0.0:
            raise ValueError("Q must be symmetric positive semi-definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class FilterState:
    """State estimate ``x`` and covariance ``P``; also used by the EKF."""

    x: NDArray[np.float64]
    P: NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        P = np.array(self.P, dtype=np.float64)
        if x.ndim != 1 or P.shape != (x.size, x.size):
            raise ValueError("x must be a vector and P a matching square matrix")
        x.flags.writeable = False
        P.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    def arrays(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Writable copies of ``x`` and ``P``."""
        return self.x.copy(), self.P.copy()

    @property
    def quaternion(self) -> NDArray[np.float64]:
        return self.x[:4].copy()

    @property
    def bias(self) -> NDArray[np.float64]:
        return self.x[4:7].copy()


def initial_state(
    q0: ArrayLike,
    p0_quat: float = 1e-2,
    p0_bias: float = math.radians(5.0) ** 2,
    bias0: ArrayLike = (0.0, 0.0, 0.0),
) -> FilterState:
    """Prior with the given attitude, bias and diagonal covariance."""
    x = np.concatenate([np.asarray(q0, dtype=np.float64), np.asarray(bias0, dtype=np.float64)])
    P = np.diag([p0_quat] * 4 + [p0_bias] * 3)
    return FilterState(x, P)


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def _weights(n, lam, alpha, beta):
    Wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    Wc = Wm.copy()
    Wm[0] = lam / (n + lam)
    Wc[0] = lam / (n + lam) + (1.0 - alpha * alpha + beta)
    return Wm, Wc


@njit(cache=True)
def _cholesky_psd(P):
    """Lower Cholesky factor of a PSD matrix; zero pivots give zero columns."""
    n = P.shape[0]
    L = np.zeros((n, n))
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(P[i, i]))
    tol = 1e-14 * scale
    for j in range(n):
        d = P[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d < -tol or not np.isfinite(d):
            return L, False
        if d <= tol:
            continue
        ljj = math.sqrt(d)
        L[j, j] = ljj
        for i in range(j + 1, n):
            s = P[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / ljj
    return L, True


@njit(cache=True)
def _symmetrize(P):
    return 0.5 * (P + P.T)


@njit(cache=True)
def _robust_cholesky(P):
    """Cholesky with one jitter retry; status is OK, REPAIRED or FAILED."""
    S, ok = _cholesky_psd(P)
    if ok:
        return S, P, STATUS_OK
    n = P.shape[0]
    jitter = 1e-12 * np.trace(P) / n
    Pr = _symmetrize(P) + jitter * np.eye(n)
    S, ok = _cholesky_psd(Pr)
    if ok:
        return S, Pr, STATUS_REPAIRED
    return S, Pr, STATUS_CHOLESKY_FAILED


@njit(cache=True)
def _sigma_points(x, P, gamma):
    S, _, status = _robust_cholesky(P)
    n = x.size
    chi = np.empty((2 * n + 1, n))
    chi[0] = x
    for i in range(n):
        chi[1 + i] = x + gamma * S[:, i]
        chi[1 + n + i] = x - gamma * S[:, i]
    return chi, status


@njit(cache=True)
def _centred(points, Wm):
    """Weighted mean of row vectors and deviations from it, centred on row 0."""
    e = points - points[0]
    m = np.zeros(points.shape[1])
    for i in range(1, points.shape[0]):
        m += Wm[i] * e[i]
    return points[0] + m, e - m


@njit(cache=True)
def _weighted_outer(da, db, Wc):
    out = np.zeros((da.shape[1], db.shape[1]))
    for i in range(da.shape[0]):
        out += Wc[i] * np.outer(da[i], db[i])
    return out


@njit(cache=True)
def _attitude_process(chi, w_s, dt):
    out = chi.copy()
    w = np.empty(3)
    for i in range(chi.shape[0]):
        w[0] = w_s[0] - chi[i, 4]
        w[1] = w_s[1] - chi[i, 5]
        w[2] = w_s[2] - chi[i, 6]
        out[i, :4] = _transition_matrix(w, dt) @ chi[i, :4]
    return out


@njit(cache=True)
def _attitude_measure(chi):
    Y = np.empty((chi.shape[0], 4))
    for i in range(chi.shape[0]):
        q = chi[i, :4]
        n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
        q0, q1, q2, q3 = q[0], q[1], q[2], q[3]
        Y[i, 0] = 2.0 * (q1 * q3 - q0 * q2) / n2
        Y[i, 1] = 2.0 * (q2 * q3 + q0 * q1) / n2
        Y[i, 2] = (q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3) / n2
        Y[i, 3] = 2.0 * (q1 * q2 + q0 * q3) / n2
    return Y


@njit(cache=True)
def _normalize_quaternion_block(x):
    out = x.copy()
    out[:4] = x[:4] / math.sqrt(np.sum(x[:4] * x[:4]))
    return out


@njit(cache=True)
def _predict_moments(chi_star, Wm, Wc, Q):
    x, d = _centred(chi_star, Wm)
    P = _weighted_outer(d, d, Wc) + Q
    return x, _symmetrize(P)


@njit(cache=True)
def _condition_ok(S):
    ev = np.linalg.eigvalsh(S)
    return ev[0] > 0.0 and ev[-1] / ev[0] <= MAX_INNOVATION_CONDITION


@njit(cache=True)
def _unscented_update(x, P, chi, Y, y, Wm, Wc, R):
    """Kalman update from sigma points ``chi`` and their images ``Y``."""
    x_mean, dx = _centred(chi, Wm)
    y_hat, dy = _centred(Y, Wm)
    Pyy = _symmetrize(_weighted_outer(dy, dy, Wc) + R)
    if not _condition_ok(Pyy):
        return x, P, STATUS_SINGULAR_INNOVATION
    Pxy = _weighted_outer(dx, dy, Wc)
    K = np.linalg.solve(Pyy, Pxy.T).T
    x_new = x + K @ (y - y_hat)
    P_new = _symmetrize(P - K @ Pyy @ K.T)
    return x_new, P_new, STATUS_OK


@njit(cache=True)
def _ukf_propagate(x, P, w_s, dt, Wm, Wc, gamma, Q):
    chi, status = _sigma_points(x, P, gamma)
    if status == STATUS_CHOLESKY_FAILED:
        return x, P, status
    xp, Pp = _predict_moments(_attitude_process(chi, w_s, dt), Wm, Wc, Q)
    return _normalize_quaternion_block(xp), Pp, status


@njit(cache=True)
def _ukf_correct(x, P, y, Wm, Wc, gamma, R):
    chi, status = _sigma_points(x, P, gamma)
    if status == STATUS_CHOLESKY_FAILED:
        return x, P, status
    xn, Pn, st = _unscented_update(x, P, chi, _attitude_measure(chi), y, Wm, Wc, R)
    if st != STATUS_OK:
        return x, P, st
    return _normalize_quaternion_block(xn), Pn, status


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def make_weights(params: UkfParams) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Mean and covariance weights of the ``2L + 1`` sigma points.

    Returns
    -------
    Wm, Wc : numpy.ndarray, shape (2L + 1,)
        ``Wm[0] = lambda / (L + lambda)``,
        ``Wc[0] = Wm[0] + 1 - alpha**2 + beta`` and every other weight equals
        ``1 / (2 (L + lambda))``.
    """
    if params.n + params.lam <= 0.0:
        raise InvalidParams("L + lambda must be positive")
    return _weights(params.n, params.lam, params.alpha, params.beta)


def cholesky_lower(P: ArrayLike) -> NDArray[np.float64]:
    """
    Lower-triangular factor ``S`` with ``S S.T = P`` for PSD ``P``.

    A failed factorisation is retried once after adding
    ``1e-12 trace(P) / L`` to the diagonal.

    Raises
    ------
    CholeskyFailure
        If the repaired matrix still is not positive semi-definite.
    """
    S, _, status = _robust_cholesky(np.asarray(P, dtype=np.float64))
    if status == STATUS_CHOLESKY_FAILED:
        raise CholeskyFailure("covariance is not positive semi-definite")
    return S


def draw_sigma_points(x: ArrayLike, P: ArrayLike, gamma: float) -> NDArray[np.float64]:
    """Sigma points as rows, shape ``(2L + 1, L)``; see the module docstring."""
    xa = np.asarray(x, dtype=np.float64)
    chi, status = _sigma_points(xa, np.asarray(P, dtype=np.float64), float(gamma))
    if status == STATUS_CHOLESKY_FAILED:
        raise CholeskyFailure("covariance is not positive semi-definite")
    return chi


ProcessFn = Callable[[NDArray[np.float64], NDArray[np.float64], float], NDArray[np.float64]]
MeasureFn = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def propagate(
    state: FilterState,
    w_measured: ArrayLike,
    dt: float,
    params: UkfParams = UkfParams(),
    noise: NoiseCovariances | None = None,
    process: ProcessFn | None = None,
) -> FilterState:
    """
    Time update.

    Every sigma point keeps its bias and has its quaternion advanced through
    ``dt`` with its own bias-corrected rate. The quaternion part of the
    predicted mean is renormalised.

    Parameters
    ----------
    state : FilterState
    w_measured : array-like, shape (3,)
        Raw gyro sample in rad/s (for a custom ``process``: its input vector).
    dt : float
        Step length in seconds.
    params : UkfParams
    noise : NoiseCovariances, optional
        Defaults to ``NoiseCovariances.default()``. For a custom process only
        ``noise.Q`` is used and it must match the state dimension.
    process : callable, optional
        ``process(chi, u, dt) -> chi_star`` operating on all sigma points at
        once. Replaces the attitude model, and disables renormalisation.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    noise = noise or NoiseCovariances.default()
    u = np.asarray(w_measured, dtype=np.float64)
    Wm, Wc = make_weights(params)
    if process is None:
        x, P, status = _ukf_propagate(*state.arrays(), u, float(dt), Wm, Wc, params.gamma, noise.Q)
    else:
        chi, status = _sigma_points(*state.arrays(), params.gamma)
        if status != STATUS_CHOLESKY_FAILED:
            chi_star = np.asarray(process(chi, u, float(dt)), dtype=np.float64)
            x, P = _predict_moments(chi_star, Wm, Wc, np.asarray(noise.Q, dtype=np.float64))
    if status == STATUS_CHOLESKY_FAILED:
        raise CholeskyFailure("covariance is not positive semi-definite")
    return FilterState(x, P)


def correct(
    state: FilterState,
    y: ArrayLike,
    params: UkfParams = UkfParams(),
    noise: NoiseCovariances | None = None,
    measure: MeasureFn | None = None,
) -> FilterState:
    """
    Measurement update with an observation ``y = (c13, c23, c11, c12)``.

    Sigma points are redrawn from the a-priori state, mapped through the
    observation model (applied to each point's renormalised quaternion),
    and combined into ``y_hat``, ``Pyy`` (with ``R``) and ``Pxy``. The gain is
    ``K = Pxy Pyy^-1``.

    If ``Pyy`` is not invertible within a condition number of 1e12 the
    a-priori state is returned unchanged and a
    :class:`SingularInnovationCovariance` warning is issued.
    """
    noise = noise or NoiseCovariances.default()
    ya = np.asarray(y, dtype=np.float64)
    Wm, Wc = make_weights(params)
    if measure is None:
        x, P, status = _ukf_correct(*state.arrays(), ya, Wm, Wc, params.gamma, noise.R)
    else:
        chi, status = _sigma_points(*state.arrays(), params.gamma)
        x, P = state.x, state.P
        if status != STATUS_CHOLESKY_FAILED:
            Y = np.atleast_2d(np.asarray(measure(chi), dtype=np.float64))
            x, P, st = _unscented_update(*state.arrays(), chi, Y, ya, Wm, Wc, noise.R)
            if st != STATUS_OK:
                status = st
    if status == STATUS_CHOLESKY_FAILED:
        raise CholeskyFailure("covariance is not positive semi-definite")
    if status == STATUS_SINGULAR_INNOVATION:
        warnings.warn("innovation covariance is singular; correction skipped", SingularInnovationCovariance)
        return state
    return FilterState(x, P)
