"""TRIAD-aided attitude and heading reference with a UKF and an EKF baseline."""

from .attitude import (
    dcm_to_euler,
    euler_rates_to_body_rates,
    euler_to_quaternion,
    propagate_quaternion,
    quaternion_to_dcm,
    quaternion_to_euler,
)
from .ekf import ekf_correct, ekf_propagate
from .logio import MalformedLog, SensorFrame, SensorLog, read_log, write_log
from .pipeline import AhrsConfig, ReplayResult, replay, step_scheduler
from .triad import PairSelection, select_pairs, triad_dcm, triad_fix
from .ukf import FilterState, NoiseCovariances, UkfParams, correct, initial_state, propagate

__version__ = "0.1.0"
