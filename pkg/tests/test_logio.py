import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from triad_ahrs.logio import LOG_COLUMNS, MalformedLog, SensorLog, format_float, read_log, write_log
from triad_ahrs.sim import CorruptionConfig, SteadyFlight, corrupt, generate_trajectory

HEADER = ",".join(LOG_COLUMNS)
ROW = "0.01,0,0,0,0,0,-9.8,0.25,0,0.37,20,,,"

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(finite)
def test_format_float_round_trips(v):
    assert float(format_float(v)) == v


def test_format_float_nan_is_empty():
    assert format_float(math.nan) == ""


@given(data=hnp.arrays(np.float64, (5, 13), elements=finite))
def test_write_read_lossless(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("log") / "log.csv"
    data[2, 9] = np.nan
    log = SensorLog(
        t=np.arange(5.0),
        gyro=data[:, 0:3],
        accel=data[:, 3:6],
        mag=data[:, 6:9],
        gps_speed=data[:, 9],
        truth_euler=data[:, 10:13],
    )
    write_log(log, path)
    back = read_log(path)
    for name in ("t", "gyro", "accel", "mag", "gps_speed", "truth_euler"):
        np.testing.assert_array_equal(getattr(back, name), getattr(log, name))


def test_simulated_log_round_trip(tmp_path):
    log = corrupt(generate_trajectory([SteadyFlight(3.0)]), CorruptionConfig(seed=3))
    write_log(log, tmp_path / "a.csv")
    back = read_log(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.gyro, log.gyro)
    np.testing.assert_array_equal(back.gps_speed, log.gps_speed)
    np.testing.assert_array_equal(back.truth_euler, log.truth_euler)
    assert back.has_truth


def test_missing_truth_columns(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(f"{HEADER}\n{ROW}\n")
    log = read_log(p)
    assert log.truth_euler is None
    assert not log.has_truth
    assert log.line_of(0) == 2


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("", None, "empty"),
        ("\n\n", None, "empty"),
        ("t,gx\n" + ROW, 1, "header"),
        (f"{HEADER}\n", 2, "no data"),
        (f"{HEADER}\n{ROW}\n0.02,0,0\n", 3, "fields"),
        (f"{HEADER}\n{ROW}\n0.02,0,0,x,0,0,-9.8,0.25,0,0.37,,,,\n", 3, "gz"),
        (f"{HEADER}\n{ROW}\n0.02,0,0,0,0,0,,0.25,0,0.37,,,,\n", 3, "az"),
        (f"{HEADER}\n{ROW}\n0.02,0,0,nan,0,0,-9.8,0.25,0,0.37,,,,\n", 3, "non-finite"),
    ],
)
def test_malformed_logs_name_file_and_line(tmp_path, text, line, fragment):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(MalformedLog) as exc:
        read_log(p)
    msg = str(exc.value)
    assert str(p) in msg
    assert fragment in msg
    assert exc.value.line == line
    if line is not None:
        assert f"line {line}" in msg


def test_blank_lines_keep_file_line_numbers(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(f"{HEADER}\n{ROW}\n\n{ROW.replace('0.01', '0.02', 1)}\n")
    log = read_log(p)
    assert len(log) == 2
    assert log.line_of(1) == 4


def test_gps_age_and_frames():
    n = 5
    log = SensorLog(
        t=np.arange(n) * 0.5,
        gyro=np.zeros((n, 3)),
        accel=np.zeros((n, 3)),
        mag=np.zeros((n, 3)),
        gps_speed=np.array([np.nan, 20.0, np.nan, np.nan, 21.0]),
    )
    np.testing.assert_array_equal(log.gps_age(), [np.inf, 0.0, 0.5, 1.0, 0.0])
    frames = list(log.frames())
    assert frames[0].gps_speed is None
    assert frames[4].gps_speed == 21.0


def test_shape_validation():
    with pytest.raises(ValueError):
        SensorLog(np.zeros(3), np.zeros((3, 3)), np.zeros((2, 3)), np.zeros((3, 3)), np.zeros(3))
