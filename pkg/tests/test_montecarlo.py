import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from triad_ahrs.montecarlo import (
    ErrorReport,
    NonMonotonePassRegion,
    ToleranceSweepSpec,
    attitude_errors,
    error_report,
    measure_triad_noise,
    run_trial,
    tolerance_sweep,
    trial_config,
)
from triad_ahrs.pipeline import ACTION_PROPAGATE, ReplayResult
from triad_ahrs.attitude import euler_to_quaternion
from triad_ahrs.sim import CorruptionConfig, SteadyFlight, generate_trajectory


@pytest.fixture(scope="module")
def short_truth():
    return generate_trajectory([SteadyFlight(30.0)])


def fake_report(ok: bool) -> ErrorReport:
    e = 0.5 if ok else 5.0
    return ErrorReport((e, e, e), (e, e, e), {}, 0, False, 0.0)


def fake_result(euler, t=None):
    euler = np.asarray(euler, dtype=float)
    n = len(euler)
    x = np.zeros((n, 7))
    x[:, :4] = [euler_to_quaternion(e) for e in euler]
    return ReplayResult(
        np.arange(n, dtype=float) if t is None else t,
        x,
        np.full(n, ACTION_PROPAGATE, dtype=np.int8),
        np.zeros(n, dtype=np.int8),
        np.zeros(n, dtype=np.int8),
        0,
        0,
    )


def test_yaw_error_across_seam():
    err = attitude_errors(np.radians([[0, 0, 179.0]]), np.radians([[0, 0, -179.0]]))
    assert math.degrees(err[0, 2]) == pytest.approx(-2.0)


@given(st.floats(-3 * math.pi, 3 * math.pi), st.floats(-math.pi, math.pi))
def test_error_is_shortest_distance(a, b):
    e = attitude_errors(np.array([[0, 0, a]]), np.array([[0, 0, b]]))[0, 2]
    assert -math.pi < e <= math.pi
    assert math.isclose(math.cos(e), math.cos(a - b), abs_tol=1e-9)


def test_error_report_window_and_divergence():
    truth = np.zeros((200, 3))
    est = np.zeros((200, 3))
    est[:50, 0] = np.radians(10.0)
    rep = error_report(fake_result(est), truth, settle_time_s=50.0)
    assert rep.max_error_deg == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)
    assert not rep.diverged
    est[10, 2] = np.radians(90.0)
    rep = error_report(fake_result(est), truth, settle_time_s=50.0)
    assert rep.diverged
    assert not rep.passes((math.inf,) * 3)


def test_error_report_rms():
    truth = np.zeros((4, 3))
    est = np.radians([[1, 0, 0], [-1, 0, 0], [1, 0, 0], [-1, 0, 2]])
    rep = error_report(fake_result(est), truth, settle_time_s=0.0)
    np.testing.assert_allclose(rep.rms_error_deg, (1.0, 0.0, 1.0), atol=1e-9)
    np.testing.assert_allclose(rep.max_error_deg, (1.0, 0.0, 2.0), atol=1e-9)


def test_trial_config_sets_only_swept_field():
    spec = ToleranceSweepSpec("gyro_q_bias", 0.0, 10.0, seed=3)
    cfg = trial_config(spec, 4.0, 2)
    assert cfg.gyro_bias_dps[0] == 0.0 and cfg.gyro_bias_dps[2] == 0.0
    assert abs(cfg.gyro_bias_dps[1]) == 4.0
    assert cfg.gyro_noise_dps == (0.0, 0.0, 0.0)
    assert cfg.gps_delay_s == 0.0
    assert trial_config(spec, 4.0, 2) == cfg
    signs = {np.sign(trial_config(spec, 1.0, i).gyro_bias_dps[1]) for i in range(20)}
    assert signs == {-1.0, 1.0}
    # common random numbers across magnitudes
    assert trial_config(spec, 1.0, 2).seed == trial_config(spec, 8.0, 2).seed


def test_trial_config_noise_and_gps():
    cfg = trial_config(ToleranceSweepSpec("mag_noise", 0.0, 10.0), 2.0, 0)
    assert cfg.mag_noise_mgauss == (2.0, 2.0, 2.0)
    cfg = trial_config(ToleranceSweepSpec("gps_bias", 0.0, 10.0), 2.0, 0)
    assert abs(cfg.gps_bias_mps) == 2.0


@pytest.mark.parametrize("bad", [dict(parameter="gyro_bias"), dict(low=5.0), dict(trials=0), dict(pass_fraction=0)])
def test_spec_validation(bad):
    kw = dict(parameter="accel_bias", low=0.0, high=1.0) | bad
    with pytest.raises(ValueError):
        ToleranceSweepSpec(**kw)


def test_sweep_bisects_threshold():
    spec = ToleranceSweepSpec("accel_bias", 0.0, 16.0, iterations=6)
    res = tolerance_sweep(spec, "ukf", None, trial_fn=lambda cfg: fake_report(abs(cfg.accel_bias_mps2[0]) <= 5.3))
    assert res.tolerance == pytest.approx(5.25)
    assert res.pass_fraction == 1.0
    assert not res.non_monotone


def test_sweep_infinite_thresholds_return_upper_bound(short_truth):
    spec = ToleranceSweepSpec("gyro_p_bias", 0.0, 20.0, trials=3, thresholds_deg=(math.inf,) * 3, settle_time_s=0.0)
    res = tolerance_sweep(spec, "ekf", short_truth)
    assert res.tolerance == 20.0
    assert len(res.evaluations) == 1


def test_sweep_lower_bound_failing():
    spec = ToleranceSweepSpec("mag_bias", 1.0, 2.0)
    res = tolerance_sweep(spec, "ukf", None, trial_fn=lambda cfg: fake_report(False))
    assert res.tolerance == 1.0
    assert res.pass_fraction == 0.0


def test_sweep_pass_fraction():
    spec = ToleranceSweepSpec("gps_noise", 0.0, 8.0, trials=10, iterations=3, pass_fraction=0.9)
    # trial 9 always fails: 9/10 still meets 0.9
    res = tolerance_sweep(spec, "ukf", None, trial_fn=lambda cfg: fake_report(cfg.seed % 100003 != 9))
    assert res.tolerance == 8.0
    assert res.pass_fraction == pytest.approx(0.9)


def test_sweep_early_stop():
    calls = []

    def fn(cfg):
        calls.append(cfg)
        return fake_report(False)

    spec = ToleranceSweepSpec("gps_noise", 0.0, 8.0, trials=10, pass_fraction=0.9)
    res = tolerance_sweep(spec, "ukf", None, trial_fn=fn)
    # two failures settle the upper bound; the returned lower bound runs in full
    assert len(calls) == 12
    assert res.evaluations == [(8.0, 0, 2), (0.0, 0, 10)]


def test_sweep_flags_non_monotone_region():
    spec = ToleranceSweepSpec("accel_noise", 0.0, 16.0, iterations=4)

    def fn(cfg):
        m = cfg.accel_noise_mps2[0]
        return fake_report(m == 0.0 or 6.0 <= m <= 9.0)

    with pytest.warns(NonMonotonePassRegion):
        res = tolerance_sweep(spec, "ukf", None, trial_fn=fn)
    assert res.tolerance == 9.0
    assert res.non_monotone


def test_bias_sweep_is_deterministic(short_truth):
    spec = ToleranceSweepSpec("mag_bias", 0.0, 200.0, trials=2, iterations=2, settle_time_s=5.0)
    a = tolerance_sweep(spec, "ekf", short_truth)
    b = tolerance_sweep(spec, "ekf", short_truth)
    assert a.tolerance == b.tolerance
    assert a.evaluations == b.evaluations


def test_run_trial_zero_corruption(short_truth):
    rep = run_trial(short_truth, CorruptionConfig.zero(), "ukf", settle_time_s=0.0)
    assert rep.passes()
    assert rep.corrections == 30
    assert max(rep.max_error_deg) < 0.2


def test_measure_triad_noise_scales_with_mag_noise(short_truth):
    quiet = measure_triad_noise(short_truth, CorruptionConfig.zero(mag_noise_mgauss=1.0), trials=2)
    loud = measure_triad_noise(short_truth, CorruptionConfig.zero(mag_noise_mgauss=10.0), trials=2)
    assert quiet.shape == (4,)
    assert np.all(quiet >= 0)
    # heading terms carry the magnetometer noise, quadratically
    assert loud[2] + loud[3] == pytest.approx(100 * (quiet[2] + quiet[3]), rel=0.3)
    np.testing.assert_allclose(quiet[:2], 0.0, atol=1e-20)
