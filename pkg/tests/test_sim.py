import math

import numpy as np
import pytest

from triad_ahrs.sim import (
    CoordinatedTurn,
    CorruptionConfig,
    EmptyScript,
    Gust,
    PitchDoublet,
    SteadyFlight,
    canonical_script,
    corrupt,
    generate_trajectory,
    highpass_gain,
)
from triad_ahrs.triad import GRAVITY, PairSelection, select_pairs


def test_level_flight_is_constant():
    tr = generate_trajectory([SteadyFlight(5.0)])
    assert len(tr) == 501
    np.testing.assert_array_equal(tr.q, np.tile([1.0, 0, 0, 0], (501, 1)))
    np.testing.assert_allclose(tr.accel, np.tile([0.0, 0.0, -GRAVITY], (501, 1)), atol=1e-15)
    np.testing.assert_allclose(tr.mag, np.tile(tr.mag_ref, (501, 1)), atol=1e-15)


def test_turn_sweeps_full_circle():
    tr = generate_trajectory([CoordinatedTurn(62.8, 0.1)])
    yaw = np.unwrap(tr.euler[:, 2])
    assert yaw[-1] - yaw[0] == pytest.approx(2 * math.pi, abs=0.01)


def test_thirty_degree_bank_load_factor():
    bank = math.radians(30.0)
    rate = GRAVITY * math.tan(bank) / 20.0
    tr = generate_trajectory([CoordinatedTurn(20.0, rate, bank)], speed=20.0)
    late = tr.t > 10.0
    load = np.linalg.norm(tr.accel[late], axis=1) / GRAVITY
    np.testing.assert_allclose(load, 1.0 / math.cos(bank), rtol=1e-3)
    np.testing.assert_allclose(tr.euler[late, 0], bank, atol=1e-3)
    sel = select_pairs(tr.accel[-1], tr.mag[-1], tr.mag_ref)
    assert sel == PairSelection.MAG_PRIMARY


def test_coordinated_turn_has_no_side_force():
    tr = generate_trajectory([CoordinatedTurn(20.0, -0.2)])
    late = tr.t > 10.0
    np.testing.assert_allclose(tr.accel[late, 1], 0.0, atol=1e-3)


def test_doublet_reaches_acrobatic_loads():
    tr = generate_trajectory([SteadyFlight(1.0), PitchDoublet(9.0, math.radians(15.0))])
    load = np.linalg.norm(tr.accel, axis=1) / GRAVITY
    assert load.max() > 1.3
    assert load.min() < 0.7


def test_gust_perturbs_rates():
    tr = generate_trajectory([Gust(30.0, math.radians(3.0))], seed=1)
    assert np.std(tr.omega[:, 0]) > math.radians(0.5)
    assert np.max(np.abs(tr.euler[:, :2])) < math.radians(10.0)


def test_speed_change_shows_in_specific_force():
    tr = generate_trajectory([SteadyFlight(10.0, speed=25.0)], speed=20.0)
    assert tr.speed[-1] == pytest.approx(25.0)
    assert tr.accel[0, 0] == pytest.approx(1.0)


def test_attitude_is_exact_integration():
    from triad_ahrs.attitude import propagate_quaternion

    tr = generate_trajectory([CoordinatedTurn(3.0, 0.2), PitchDoublet(3.0, 0.2)])
    for k in range(0, len(tr) - 1, 37):
        np.testing.assert_allclose(tr.q[k + 1], propagate_quaternion(tr.q[k], tr.omega[k], tr.dt), atol=1e-15)


@pytest.mark.parametrize("script", [[], [SteadyFlight(0.0)]])
def test_empty_script(script):
    with pytest.raises(EmptyScript):
        generate_trajectory(script)


def test_canonical_script_is_long_enough(canonical_truth):
    assert canonical_truth.t[-1] >= 600.0
    kinds = {type(m) for m in canonical_script()}
    assert {SteadyFlight, CoordinatedTurn, PitchDoublet, Gust} <= kinds


def test_zero_corruption_reproduces_truth(canonical_truth):
    tr = canonical_truth
    log = corrupt(tr, CorruptionConfig.zero())
    np.testing.assert_array_equal(log.gyro, tr.omega)
    np.testing.assert_array_equal(log.accel, tr.accel)
    np.testing.assert_array_equal(log.mag, tr.mag)
    delivered = ~np.isnan(log.gps_speed)
    np.testing.assert_array_equal(log.gps_speed[delivered], tr.speed[delivered])
    assert delivered.sum() == int(tr.t[-1]) + 1


def test_constant_gyro_bias_offset():
    tr = generate_trajectory([CoordinatedTurn(5.0, 0.1)])
    log = corrupt(tr, CorruptionConfig.zero(gyro_bias_dps=(3.0, 3.0, 3.0)))
    np.testing.assert_allclose(log.gyro - tr.omega, math.radians(3.0), atol=1e-15)


def test_same_seed_same_stream_different_seed_differs():
    tr = generate_trajectory([SteadyFlight(20.0)])
    a = corrupt(tr, CorruptionConfig(seed=5))
    b = corrupt(tr, CorruptionConfig(seed=5))
    c = corrupt(tr, CorruptionConfig(seed=6))
    for name in ("gyro", "accel", "mag", "gps_speed"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.gyro, c.gyro)


def test_channels_draw_independently():
    tr = generate_trajectory([SteadyFlight(20.0)])
    a = corrupt(tr, CorruptionConfig(seed=5))
    b = corrupt(tr, CorruptionConfig(seed=5, gyro_noise_dps=0.0))
    np.testing.assert_array_equal(a.mag, b.mag)
    np.testing.assert_array_equal(a.accel, b.accel)


def test_noise_statistics():
    tr = generate_trajectory([SteadyFlight(10_000.0)])
    n = len(tr)
    assert n > 1_000_000
    cfg = CorruptionConfig(gps_rate_hz=100.0, gps_delay_s=0.0, seed=9)
    log = corrupt(tr, cfg)
    checks = [
        (np.degrees(log.gyro - tr.omega), cfg.gyro_bias_dps, cfg.gyro_noise_dps),
        ((log.mag - tr.mag) * 1e3, cfg.mag_bias_mgauss, cfg.mag_noise_mgauss),
        (log.accel - tr.accel, cfg.accel_bias_mps2, cfg.accel_noise_mps2),
        ((log.gps_speed - tr.speed)[:, None], (cfg.gps_bias_mps,), (cfg.gps_noise_mps,)),
    ]
    for err, bias, sigma in checks:
        sigma = np.asarray(sigma)
        np.testing.assert_allclose(err.std(axis=0), sigma, rtol=0.01)
        assert np.all(np.abs(err.mean(axis=0) - bias) <= 3 * sigma / math.sqrt(n))


def test_accel_noise_is_high_frequency():
    tr = generate_trajectory([SteadyFlight(1_000.0)])
    cfg = CorruptionConfig.zero(accel_noise_mps2=1.0, seed=2)
    e = corrupt(tr, cfg).accel[1:, 0] - tr.accel[1:, 0]
    block_means = e[: len(e) // 100 * 100].reshape(-1, 100).mean(axis=1)
    # white noise would give a block-mean variance of 1/100
    assert block_means.var() < 0.2 / 100


def test_highpass_gain_normalisation():
    a, std = highpass_gain(20.0, 0.01)
    tau = 1 / (2 * math.pi * 20.0)
    assert a == pytest.approx(tau / (tau + 0.01))
    assert std == pytest.approx(a * math.sqrt(2 / (1 + a)))


def test_gps_delay_and_cadence():
    tr = generate_trajectory([SteadyFlight(30.0, speed=25.0)], speed=20.0)
    log = corrupt(tr, CorruptionConfig.zero(gps_delay_s=1.0))
    delivered = np.flatnonzero(~np.isnan(log.gps_speed))
    np.testing.assert_allclose(np.diff(log.t[delivered]), 1.0, atol=1e-9)
    np.testing.assert_allclose(log.t[delivered] - log.gps_time[delivered], 1.0, atol=1e-12)
    assert log.t[delivered[0]] == pytest.approx(1.0)
    np.testing.assert_allclose(log.gps_speed[delivered], np.interp(log.t[delivered] - 1.0, tr.t, tr.speed))


def test_corruption_config_validation():
    with pytest.raises(ValueError):
        CorruptionConfig(gyro_noise_dps=-1.0)
    with pytest.raises(ValueError):
        CorruptionConfig(gps_delay_s=-0.5)
    with pytest.raises(ValueError):
        CorruptionConfig(mag_bias_mgauss=(1.0, 2.0))
