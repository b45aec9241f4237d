"""
TRIAD observation chain.

Turns low-pass filtered accelerometer and magnetometer samples into the four
DCM terms ``(c13, c23, c11, c12)`` consumed by the filters:

1. :func:`lowpass_step` smooths the raw signals.
2. :func:`select_pairs` decides which vector pair TRIAD should trust most,
   or whether the correction should be skipped.
3. :func:`subtract_centrifugal` removes ``w x (U, 0, 0)`` from the specific
   force so that what remains points along gravity.
4. :func:`triad_dcm` builds the NED-to-body DCM and :func:`observe` reads the
   four terms out of it.

Accelerometers measure specific force, which in level flight is
``(0, 0, -g)`` in body axes. The gravity observation paired with the NED
reference ``(0, 0, 1)`` is therefore the *negated* corrected specific force.
"""

from __future__ import annotations

import enum
import math
from typing import NamedTuple

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

EPS_PARALLEL = 1e-6
GRAVITY = 9.80665
GRAVITY_REF = np.array([0.0, 0.0, 1.0])


class PairSelection(enum.IntEnum):
    """Outcome of the pair-reliability criteria, in priority order."""

    ACCEL_PRIMARY = 0
    MAG_PRIMARY = 1
    SKIP_MAG_UNRELIABLE = 2
    SKIP_ACROBATIC = 3

    @property
    def skips(self) -> bool:
        return self >= PairSelection.SKIP_MAG_UNRELIABLE


class DegeneratePair(ValueError):
    """Observation or reference vectors are (nearly) parallel."""


class TriadPair(NamedTuple):
    """Body-frame observation and the matching NED reference direction."""

    observation: NDArray[np.float64]
    reference: NDArray[np.float64]


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _triad_frame(v1, v2):
    """Orthonormal triad (columns) built from two unit vectors; None if parallel."""
    x = _cross(v1, v2)
    nx = math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    M = np.empty((3, 3))
    if nx <= EPS_PARALLEL:
        return M, False
    y = _cross(v1, x)
    for i in range(3):
        M[i, 0] = v1[i]
        M[i, 1] = x[i] / nx
        M[i, 2] = y[i] / nx
    return M, True


@njit(cache=True)
def _unit(v):
    return v / math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


@njit(cache=True)
def _triad_dcm(w1, w2, v1, v2):
    Mo, ok_o = _triad_frame(_unit(w1), _unit(w2))
    Mr, ok_r = _triad_frame(_unit(v1), _unit(v2))
    if not (ok_o and ok_r):
        return np.eye(3), False
    return Mo @ Mr.T, True


@njit(cache=True)
def _observe(A):
    y = np.empty(4)
    y[0] = A[0, 2]
    y[1] = A[1, 2]
    y[2] = A[0, 0]
    y[3] = A[0, 1]
    return y


@njit(cache=True)
def _subtract_centrifugal(a, w, speed):
    out = a.copy()
    out[1] -= w[2] * speed
    out[2] += w[1] * speed
    return out


@njit(cache=True)
def _select_pairs(accel_norm, mag_norm, mag_ref_norm, gravity):
    ratio = accel_norm / gravity
    if 0.9 <= ratio <= 1.1:
        return 0
    if 0.7 < ratio < 0.9 or 1.1 < ratio < 1.3:
        return 1
    if mag_norm > 1.2 * mag_ref_norm or mag_norm < 0.8 * mag_ref_norm:
        return 2
    # the remaining loads are > 1.3 g or < 0.7 g; exactly 0.7 g or 1.3 g with a
    # healthy magnetometer falls through the printed criteria and is treated as
    # acrobatic so that the decision is total
    return 3


@njit(cache=True)
def _lowpass_coefficient(cutoff_hz, sample_rate_hz):
    return 1.0 - math.exp(-2.0 * math.pi * cutoff_hz / sample_rate_hz)


@njit(cache=True)
def _triad_observation(selection, gravity_obs, mag, mag_ref):
    """TRIAD DCM for a non-skip selection code; returns (dcm, ok)."""
    g_ref = np.array([0.0, 0.0, 1.0])
    if selection == 0:
        return _triad_dcm(gravity_obs, mag, g_ref, mag_ref)
    return _triad_dcm(mag, gravity_obs, mag_ref, g_ref)


def triad_dcm(pair1: TriadPair, pair2: TriadPair) -> NDArray[np.float64]:
    """
    NED-to-body DCM from two observation/reference pairs.

    The result satisfies ``A @ V1 == W1`` exactly; the second pair only fixes
    the rotation about ``V1``, so ``pair1`` should be the more accurate one.

    Parameters
    ----------
    pair1, pair2 : TriadPair
        Body-frame observations and NED references. They need not be unit
        length; they are normalised here.

    Raises
    ------
    DegeneratePair
        If either the observations or the references are parallel to within
        ``EPS_PARALLEL``.
    """
    vecs = [np.asarray(v, dtype=np.float64) for v in (*pair1, *pair2)]
    for v in vecs:
        if v.shape != (3,) or not np.all(np.isfinite(v)) or not np.any(v):
            raise ValueError("TRIAD vectors must be finite, non-zero 3-vectors")
    w1, v1, w2, v2 = vecs
    A, ok = _triad_dcm(w1, w2, v1, v2)
    if not ok:
        raise DegeneratePair("TRIAD vector pairs are parallel")
    return A


def observe(dcm: ArrayLike) -> NDArray[np.float64]:
    """The four observed DCM terms ``(c13, c23, c11, c12)``."""
    A = np.asarray(dcm, dtype=np.float64)
    if A.shape != (3, 3):
        raise ValueError(f"dcm must have shape (3, 3), got {A.shape}")
    return _observe(A)


def subtract_centrifugal(accel: ArrayLike, w: ArrayLike, speed: float) -> NDArray[np.float64]:
    """
    Remove the centripetal part of the specific force.

    The body velocity is approximated by ``(U, 0, 0)`` with ``U`` the GPS
    speed, so the removed term is ``w x (U, 0, 0) = (0, R U, -Q U)``.
    """
    if speed < 0:
        raise ValueError("speed must be non-negative")
    a = np.asarray(accel, dtype=np.float64)
    return _subtract_centrifugal(a, np.asarray(w, dtype=np.float64), float(speed))


def select_pairs(
    accel: ArrayLike,
    mag: ArrayLike,
    mag_ref: ArrayLike,
    gravity: float = GRAVITY,
) -> PairSelection:
    """
    Apply the reliability criteria in priority order.

    1. ``0.9 g <= |a| <= 1.1 g``: steady flight, accelerometer pair first.
    2. ``0.7 g < |a| < 0.9 g`` or ``1.1 g < |a| < 1.3 g``: coordinated turn,
       magnetometer pair first.
    3. ``|m|`` outside ``[0.8, 1.2] |m_ref|``: skip, magnetometer unreliable.
    4. Anything else: skip, acrobatic.

    ``accel`` is the filtered specific force as measured, so a coordinated
    turn shows its load factor here even though the centripetal part is
    removed before TRIAD.
    """
    a = float(np.linalg.norm(np.asarray(accel, dtype=np.float64)))
    m = float(np.linalg.norm(np.asarray(mag, dtype=np.float64)))
    m_ref = float(np.linalg.norm(np.asarray(mag_ref, dtype=np.float64)))
    if m_ref == 0.0:
        raise ValueError("magnetic reference must be non-zero")
    return PairSelection(_select_pairs(a, m, m_ref, float(gravity)))


def build_pairs(
    selection: PairSelection,
    gravity_obs: ArrayLike,
    mag: ArrayLike,
    mag_ref: ArrayLike,
) -> tuple[TriadPair, TriadPair]:
    """
    Order the gravity and magnetic pairs for :func:`triad_dcm`.

    ``gravity_obs`` is the body-frame direction of gravity (the negated,
    centrifugal-corrected specific force).
    """
    g_pair = TriadPair(np.asarray(gravity_obs, dtype=np.float64), GRAVITY_REF.copy())
    m_pair = TriadPair(np.asarray(mag, dtype=np.float64), np.asarray(mag_ref, dtype=np.float64))
    if selection == PairSelection.ACCEL_PRIMARY:
        return g_pair, m_pair
    if selection == PairSelection.MAG_PRIMARY:
        return m_pair, g_pair
    raise ValueError(f"{selection.name} does not produce a TRIAD observation")


def lowpass_step(
    x: ArrayLike,
    state: ArrayLike | None,
    cutoff_hz: float,
    sample_rate_hz: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    One sample of a first-order IIR low-pass filter.

    ``y[k] = y[k-1] + a (x[k] - y[k-1])`` with ``a = 1 - exp(-2 pi fc / fs)``;
    the DC gain is exactly one.

    Parameters
    ----------
    x : array-like
        New input sample.
    state : array-like or None
        Previous output; None means a zero initial state.
    cutoff_hz, sample_rate_hz : float
        Corner frequency and sampling rate, ``0 < cutoff < fs / 2``.

    Returns
    -------
    y : numpy.ndarray
        Filtered sample.
    state : numpy.ndarray
        Memory to pass to the next call (equal to ``y``).
    """
    if not 0.0 < cutoff_hz < 0.5 * sample_rate_hz:
        raise ValueError("cutoff must lie in (0, sample_rate / 2)")
    xa = np.asarray(x, dtype=np.float64)
    prev = np.zeros_like(xa) if state is None else np.asarray(state, dtype=np.float64)
    a = _lowpass_coefficient(float(cutoff_hz), float(sample_rate_hz))
    y = prev + a * (xa - prev)
    return y, y.copy()


def triad_fix(accel: ArrayLike, mag: ArrayLike, mag_ref: ArrayLike) -> NDArray[np.float64]:
    """Static-alignment DCM from one raw accelerometer/magnetometer sample."""
    return triad_dcm(
        TriadPair(-np.asarray(accel, dtype=np.float64), GRAVITY_REF.copy()),
        TriadPair(np.asarray(mag, dtype=np.float64), np.asarray(mag_ref, dtype=np.float64)),
    )
