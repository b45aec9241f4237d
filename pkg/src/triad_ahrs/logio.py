"""
Sensor log container and the CSV log format.

Log columns (header row required, in this order)::

    t,gx,gy,gz,ax,ay,az,mx,my,mz,gps_speed,truth_roll,truth_pitch,truth_yaw

Units are s, rad/s, m/s^2, gauss, m/s and rad. ``gps_speed`` is empty on
frames without a GPS delivery; the truth columns are empty when unknown.
Numbers are written with 17 significant digits so a write/read cycle is
lossless.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from numpy.typing import NDArray

LOG_COLUMNS = (
    "t",
    "gx",
    "gy",
    "gz",
    "ax",
    "ay",
    "az",
    "mx",
    "my",
    "mz",
    "gps_speed",
    "truth_roll",
    "truth_pitch",
    "truth_yaw",
)

OUTPUT_COLUMNS = (
    "t",
    "roll",
    "pitch",
    "yaw",
    "bias_x",
    "bias_y",
    "bias_z",
    "correction_applied",
    "skip_reason",
)


class MalformedLog(ValueError):
    """Raised with the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SensorFrame(NamedTuple):
    """One timestamped sensor record."""

    t: float
    gyro: NDArray[np.float64]
    accel: NDArray[np.float64]
    mag: NDArray[np.float64]
    gps_speed: float | None
    gps_age: float


@dataclass
class SensorLog:
    """
    Column-oriented sensor log.

    ``gps_speed`` is NaN where no GPS sample was delivered. ``gps_time`` holds
    the measurement epoch of delivered GPS samples (NaN elsewhere) and only
    exists for simulated logs. ``truth_euler`` is NaN when unknown.
    """

    t: NDArray[np.float64]
    gyro: NDArray[np.float64]
    accel: NDArray[np.float64]
    mag: NDArray[np.float64]
    gps_speed: NDArray[np.float64]
    truth_euler: NDArray[np.float64] | None = None
    gps_time: NDArray[np.float64] | None = field(default=None, repr=False)
    source_lines: NDArray[np.int64] | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.t)
        for name in ("gyro", "accel", "mag"):
            if getattr(self, name).shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3)")
        if self.gps_speed.shape != (n,):
            raise ValueError(f"gps_speed must have shape ({n},)")
        if self.truth_euler is not None and self.truth_euler.shape != (n, 3):
            raise ValueError(f"truth_euler must have shape ({n}, 3)")

    def __len__(self) -> int:
        return len(self.t)

    def line_of(self, k: int) -> int:
        """1-based file line of frame ``k`` (header on line 1)."""
        if self.source_lines is not None:
            return int(self.source_lines[k])
        return k + 2

    @property
    def has_truth(self) -> bool:
        return self.truth_euler is not None and bool(np.all(np.isfinite(self.truth_euler)))

    def gps_age(self) -> NDArray[np.float64]:
        """Seconds since the most recent GPS delivery (inf before the first)."""
        age = np.full(len(self), np.inf)
        last = -np.inf
        for k, (tk, s) in enumerate(zip(self.t, self.gps_speed)):
            if not math.isnan(s):
                last = tk
            age[k] = tk - last
        return age

    def frames(self) -> Iterator[SensorFrame]:
        ages = self.gps_age()
        for k in range(len(self)):
            s = self.gps_speed[k]
            yield SensorFrame(
                float(self.t[k]),
                self.gyro[k].copy(),
                self.accel[k].copy(),
                self.mag[k].copy(),
                None if math.isnan(s) else float(s),
                float(ages[k]),
            )


def format_float(v: float) -> str:
    """17-significant-digit text, empty for NaN."""
    if math.isnan(v):
        return ""
    return f"{v:.17g}"


def write_log(log: SensorLog, path: str | Path) -> None:
    truth = log.truth_euler if log.truth_euler is not None else np.full((len(log), 3), np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for k in range(len(log)):
            row = [log.t[k], *log.gyro[k], *log.accel[k], *log.mag[k], log.gps_speed[k], *truth[k]]
            w.writerow([format_float(float(v)) for v in row])


def _parse_cell(text: str, line: int, column: str, optional: bool) -> float:
    text = text.strip()
    if text == "":
        if optional:
            return math.nan
        raise MalformedLog(f"missing value for {column}", line)
    try:
        v = float(text)
    except ValueError:
        raise MalformedLog(f"cannot parse {column}={text!r}", line) from None
    if not math.isfinite(v):
        raise MalformedLog(f"non-finite {column}", line)
    return v


def read_log(path: str | Path) -> SensorLog:
    """
    Parse a CSV sensor log.

    Raises
    ------
    MalformedLog
        Empty file, wrong header, wrong field count or unparsable numbers.
        The message names the file and the 1-based line number.
    """
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise MalformedLog(f"{path}: empty log file")
    try:
        return _parse_log(io.StringIO(text))
    except MalformedLog as exc:
        err = MalformedLog(f"{path}: {exc}")
        err.line = exc.line
        raise err from None


def _parse_log(fh) -> SensorLog:
    reader = csv.reader(fh)
    header = next(reader)
    if tuple(h.strip() for h in header) != LOG_COLUMNS:
        raise MalformedLog("unexpected header; expected " + ",".join(LOG_COLUMNS), 1)
    optional = {"gps_speed", "truth_roll", "truth_pitch", "truth_yaw"}
    rows = []
    lines = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        lines.append(line)
        if len(row) != len(LOG_COLUMNS):
            raise MalformedLog(f"expected {len(LOG_COLUMNS)} fields, got {len(row)}", line)
        rows.append([_parse_cell(c, line, name, name in optional) for c, name in zip(row, LOG_COLUMNS)])
    if not rows:
        raise MalformedLog("log has no data rows", 2)
    data = np.array(rows)
    truth = data[:, 11:14]
    return SensorLog(
        t=data[:, 0].copy(),
        gyro=data[:, 1:4].copy(),
        accel=data[:, 4:7].copy(),
        mag=data[:, 7:10].copy(),
        gps_speed=data[:, 10].copy(),
        truth_euler=None if np.all(np.isnan(truth)) else truth.copy(),
        source_lines=np.array(lines, dtype=np.int64),
    )
