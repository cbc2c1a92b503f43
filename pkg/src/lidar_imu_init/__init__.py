"""Motion-based LiDAR-inertial initialization.

Estimates the LiDAR-IMU time offset, extrinsic rotation and translation,
gyroscope and accelerometer biases and gravity from an IMU stream plus a
LiDAR odometry stream, and judges whether the recorded motion excites all
of them. A trajectory simulator provides exact ground truth.
"""

__version__ = "0.1.0"

from .pipeline import CalibrationResult, PipelineConfig, StageError, run_initialization, run_lo_sim  # noqa: E402

__all__ = [
    "__version__",
    "CalibrationResult",
    "PipelineConfig",
    "StageError",
    "run_initialization",
    "run_lo_sim",
]
