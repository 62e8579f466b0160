"""Extended, cubature and square-root cubature Kalman filters."""

from ._core import (
    CubatureSet,
    GaussianBelief,
    UpdateArtifacts,
    ckf_predict,
    ckf_update,
    cubature_points,
    ekf_predict,
    ekf_update,
    sckf_predict,
    sckf_update,
)
from .estimators import (
    FILTERS,
    BaseNonlinearFilter,
    CubatureKalmanFilter,
    ExtendedKalmanFilter,
    SquareRootCubatureKalmanFilter,
)
from ..linalg import jacobian_fd, tria

__all__ = [
    "FILTERS", "BaseNonlinearFilter", "CubatureKalmanFilter", "CubatureSet",
    "ExtendedKalmanFilter", "GaussianBelief", "SquareRootCubatureKalmanFilter",
    "UpdateArtifacts", "ckf_predict", "ckf_update", "cubature_points",
    "ekf_predict", "ekf_update", "jacobian_fd", "sckf_predict", "sckf_update",
    "tria",
]
