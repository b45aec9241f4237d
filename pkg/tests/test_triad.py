import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from triad_ahrs.attitude import euler_to_quaternion, quaternion_to_dcm
from triad_ahrs.triad import (
    GRAVITY,
    DegeneratePair,
    PairSelection,
    TriadPair,
    build_pairs,
    lowpass_step,
    observe,
    select_pairs,
    subtract_centrifugal,
    triad_dcm,
    triad_fix,
)

MAG_REF = np.array([0.257, -0.004, 0.371])


def test_identity_pairs():
    A = triad_dcm(TriadPair([0, 0, 1.0], [0, 0, 1.0]), TriadPair([1.0, 0, 0], [1.0, 0, 0]))
    np.testing.assert_allclose(A, np.eye(3), atol=1e-15)


def test_recovers_yaw_quarter_turn():
    R = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    v1, v2 = np.array([0, 0, 1.0]), np.array([1.0, 0, 0])
    A = triad_dcm(TriadPair(R @ v1, v1), TriadPair(R @ v2, v2))
    np.testing.assert_allclose(A, R, atol=1e-12)


def test_parallel_references_rejected():
    with pytest.raises(DegeneratePair):
        triad_dcm(TriadPair([0, 0, 1.0], [0, 0, 1.0]), TriadPair([1.0, 0, 0], [0, 0, 2.0]))


def test_parallel_observations_rejected():
    with pytest.raises(DegeneratePair):
        triad_dcm(TriadPair([0, 0, 1.0], [0, 0, 1.0]), TriadPair([0, 0, -3.0], [1.0, 0, 0]))


def test_zero_vector_rejected():
    with pytest.raises(ValueError):
        triad_dcm(TriadPair([0, 0, 0.0], [0, 0, 1.0]), TriadPair([1.0, 0, 0], [1.0, 0, 0]))


def test_random_rotations_recovered():
    rng = np.random.default_rng(7)
    rots = Rotation.random(1000, random_state=rng).as_matrix()
    for R in rots:
        v1, v2 = rng.standard_normal(3), rng.standard_normal(3)
        if np.linalg.norm(np.cross(v1, v2)) < 1e-3 * np.linalg.norm(v1) * np.linalg.norm(v2):
            continue
        A = triad_dcm(TriadPair(R @ v1, v1), TriadPair(R @ v2, v2))
        np.testing.assert_allclose(A, R, atol=1e-10)


@given(st.floats(-3, 3), st.floats(-1.4, 1.4), st.floats(-3, 3), st.floats(0.05, 1.0))
def test_primary_pair_is_matched_exactly(roll, pitch, yaw, skew):
    A_true = quaternion_to_dcm(euler_to_quaternion([roll, pitch, yaw]))
    v1 = np.array([0.0, 0.0, 1.0])
    v2 = np.array([1.0, 0.0, 0.0])
    w1 = A_true @ v1
    # second observation deliberately inconsistent: only its plane matters
    w2 = A_true @ np.array([1.0, skew, 0.3])
    A = triad_dcm(TriadPair(w1, v1), TriadPair(w2, v2))
    np.testing.assert_allclose(A @ v1, w1, atol=1e-12)
    np.testing.assert_allclose(A @ A.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(A) == pytest.approx(1.0, abs=1e-12)


def test_observe_identity_and_yaw():
    np.testing.assert_array_equal(observe(np.eye(3)), [0.0, 0.0, 1.0, 0.0])
    A = quaternion_to_dcm(euler_to_quaternion([0.0, 0.0, math.pi / 2]))
    np.testing.assert_allclose(observe(A), [0.0, 0.0, 0.0, 1.0], atol=1e-15)


def test_observe_pitch_up():
    q = np.array([math.sqrt(0.5), 0.0, math.sqrt(0.5), 0.0])
    assert observe(quaternion_to_dcm(q))[0] == pytest.approx(-1.0)


def test_centrifugal_subtraction():
    np.testing.assert_allclose(subtract_centrifugal([0, 4, -9.81], [0, 0, 0.2], 20.0), [0, 0, -9.81], atol=1e-15)
    a = np.array([0.1, 0.2, -9.8])
    np.testing.assert_array_equal(subtract_centrifugal(a, [0.3, -0.1, 0.2], 0.0), a)
    np.testing.assert_array_equal(subtract_centrifugal(a, [0.1, 0.0, 0.0], 25.0), a)
    with pytest.raises(ValueError):
        subtract_centrifugal(a, [0, 0, 0], -1.0)


@pytest.mark.parametrize(
    "load, mag_scale, expected",
    [
        (1.00, 1.0, PairSelection.ACCEL_PRIMARY),
        (0.90, 1.0, PairSelection.ACCEL_PRIMARY),
        (1.10, 1.0, PairSelection.ACCEL_PRIMARY),
        (1.20, 1.0, PairSelection.MAG_PRIMARY),
        (1.0 / math.cos(math.radians(30)), 1.0, PairSelection.MAG_PRIMARY),
        (0.80, 1.0, PairSelection.MAG_PRIMARY),
        (1.50, 1.0, PairSelection.SKIP_ACROBATIC),
        (0.50, 1.0, PairSelection.SKIP_ACROBATIC),
        (1.30, 1.0, PairSelection.SKIP_ACROBATIC),
        (0.70, 1.0, PairSelection.SKIP_ACROBATIC),
        (1.50, 1.3, PairSelection.SKIP_MAG_UNRELIABLE),
        (0.50, 0.7, PairSelection.SKIP_MAG_UNRELIABLE),
        # the magnetometer check only runs when the load is not usable anyway
        (1.00, 1.5, PairSelection.ACCEL_PRIMARY),
        (1.20, 1.5, PairSelection.MAG_PRIMARY),
    ],
)
def test_selection_priority(load, mag_scale, expected):
    accel = np.array([0.0, 0.0, -load * GRAVITY])
    sel = select_pairs(accel, MAG_REF * mag_scale, MAG_REF)
    assert sel == expected
    assert sel.skips == (expected in (PairSelection.SKIP_ACROBATIC, PairSelection.SKIP_MAG_UNRELIABLE))


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_selection_is_total(load, mag_scale):
    sel = select_pairs([0.0, 0.0, -load * GRAVITY], MAG_REF * mag_scale, MAG_REF)
    assert isinstance(sel, PairSelection)


def test_build_pairs_orders_by_selection():
    g_obs = np.array([0.0, 0.0, 1.0])
    first, second = build_pairs(PairSelection.ACCEL_PRIMARY, g_obs, MAG_REF, MAG_REF)
    np.testing.assert_array_equal(first.reference, [0, 0, 1])
    first, second = build_pairs(PairSelection.MAG_PRIMARY, g_obs, MAG_REF, MAG_REF)
    np.testing.assert_array_equal(first.reference, MAG_REF)
    with pytest.raises(ValueError):
        build_pairs(PairSelection.SKIP_ACROBATIC, g_obs, MAG_REF, MAG_REF)


def test_static_fix_recovers_attitude():
    A_true = quaternion_to_dcm(euler_to_quaternion([0.2, -0.1, 2.5]))
    accel = -A_true @ np.array([0.0, 0.0, GRAVITY])
    np.testing.assert_allclose(triad_fix(accel, A_true @ MAG_REF, MAG_REF), A_true, atol=1e-12)


def test_lowpass_dc_gain_is_one():
    y, state = None, None
    for _ in range(2000):
        y, state = lowpass_step(np.array([1.5, -2.0, 9.0]), state, 10.0, 100.0)
    np.testing.assert_allclose(y, [1.5, -2.0, 9.0], rtol=1e-12)


def test_lowpass_attenuates_ten_times_cutoff():
    fc, fs = 2.0, 100.0
    t = np.arange(4000) / fs
    x = np.sin(2 * np.pi * 10 * fc * t)
    state, out = None, []
    for v in x:
        y, state = lowpass_step(np.array([v]), state, fc, fs)
        out.append(y[0])
    amp = np.max(np.abs(out[2000:]))
    assert 20 * np.log10(amp) <= -15.0


def test_lowpass_rejects_cutoff_above_nyquist():
    with pytest.raises(ValueError):
        lowpass_step(np.zeros(3), None, 60.0, 100.0)
