"""Nonlinear dynamic state estimation of a synchronous machine under attack.

EKF, cubature and square-root cubature Kalman filters for a fourth-order
single-machine infinite-bus model, with measurement attacks, parameter
faults and residual detectors.
"""

from .attacks import AttackInjector, AttackSpec
from .config import ScenarioConfig, load_config, load_preset
from .detection import ChiSquareDetector, DetectorConfig, EuclideanDetector
from .exceptions import ConfigError, IoError, NumericalError, SingularityError
from .filters import (
    CubatureKalmanFilter,
    ExtendedKalmanFilter,
    SquareRootCubatureKalmanFilter,
)
from .harness import bound_monitor, run_monte_carlo, run_scenario
from .model import MachineParams, NoiseSpec, ParamFault, SMIBPlant

__version__ = "0.1.0"

__all__ = [
    "AttackInjector", "AttackSpec", "ChiSquareDetector", "ConfigError",
    "CubatureKalmanFilter", "DetectorConfig", "EuclideanDetector",
    "ExtendedKalmanFilter", "IoError", "MachineParams", "NoiseSpec",
    "NumericalError", "ParamFault", "SMIBPlant", "ScenarioConfig",
    "SingularityError", "SquareRootCubatureKalmanFilter", "bound_monitor",
    "load_config", "load_preset", "run_monte_carlo", "run_scenario",
]
