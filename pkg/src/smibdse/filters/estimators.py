"""Scikit-learn style wrappers around the per-phase filter operations."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ..linalg import cholesky_jitter
from ..validation import check_spd, check_vector
from . import _core


class BaseNonlinearFilter(TransformerMixin, BaseEstimator):
    """Recursive Bayesian filter for a :class:`~smibdse.model.PlantModel`.

    Parameters
    ----------
    plant : PlantModel
        Discrete-time dynamics ``f`` and measurement map ``h``.
    q_cov : array-like of shape (n, n)
        Process-noise covariance assumed by the filter.
    r_cov : array-like of shape (p, p)
        Measurement-noise covariance assumed by the filter.
    x0 : array-like of shape (n,)
        Initial posterior mean.
    p0 : array-like of shape (n, n)
        Initial posterior covariance.

    Attributes
    ----------
    belief_ : GaussianBelief
        Current posterior.
    artifacts_ : UpdateArtifacts or None
        Output of the most recent measurement update.
    """

    name = "base"

    def __init__(self, plant=None, q_cov=None, r_cov=None, x0=None, p0=None):
        self.plant = plant
        self.q_cov = q_cov
        self.r_cov = r_cov
        self.x0 = x0
        self.p0 = p0

    def _validate(self):
        if self.plant is None:
            raise ValueError(f"{type(self).__name__} needs a plant")
        n, p = self.plant.state_dim, self.plant.meas_dim
        self.n_states_ = n
        self.q_ = check_spd(np.zeros((n, n)) if self.q_cov is None else self.q_cov,
                            n, "q_cov", allow_zero=True)
        self.r_ = check_spd(np.zeros((p, p)) if self.r_cov is None else self.r_cov,
                            p, "r_cov", allow_zero=True)
        x0 = np.zeros(n) if self.x0 is None else self.x0
        p0 = np.eye(n) if self.p0 is None else self.p0
        return check_vector(x0, n, "x0"), check_spd(p0, n, "p0")

    def _initial_belief(self, x0, p0):
        return _core.GaussianBelief(x0, cov=p0)

    def fit(self, Y=None, U=None):
        """Validate parameters and reset to the initial posterior.

        When a measurement sequence ``Y`` is given it is filtered and the
        results are kept in ``means_`` and ``covariances_``.
        """
        x0, p0 = self._validate()
        self.belief_ = self._initial_belief(x0, p0)
        self.artifacts_ = None
        if Y is not None:
            self.means_, self.covariances_ = self._run(Y, U)
        return self

    def _check_fitted(self):
        if not hasattr(self, "belief_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit first")

    def time_update(self, u):
        self._check_fitted()
        self.belief_ = self._predict(self.belief_, u)
        return self.belief_

    def measurement_update(self, y, u=None, gain_transform=None):
        self._check_fitted()
        self.belief_, self.artifacts_ = self._update(
            self.belief_, u, np.atleast_1d(y), gain_transform)
        return self.artifacts_

    def step(self, y, u_prev, u=None, gain_transform=None):
        """Predict with ``u_prev`` then correct with measurement ``y``."""
        self.time_update(u_prev)
        return self.measurement_update(y, u, gain_transform)

    @property
    def mean_(self):
        self._check_fitted()
        return self.belief_.mean

    @property
    def covariance_(self):
        self._check_fitted()
        return self.belief_.covariance

    def _run(self, Y, U):
        Y = np.asarray(Y, dtype=float)
        Y = Y.reshape(len(Y), -1)
        if U is None:
            U = np.zeros((len(Y), 1))
        U = np.asarray(U, dtype=float)
        if len(U) != len(Y):
            raise ValueError("Y and U must have the same number of rows")
        means = np.empty((len(Y), self.n_states_))
        covs = np.empty((len(Y), self.n_states_, self.n_states_))
        # row 0 holds the initial posterior; updates start at k = 1
        means[0], covs[0] = self.belief_.mean, self.belief_.covariance
        for k in range(1, len(Y)):
            self.step(Y[k], U[k - 1], U[k])
            means[k], covs[k] = self.belief_.mean, self.belief_.covariance
        return means, covs

    def transform(self, Y, U=None):
        """Filtered state means for measurement sequence ``Y``.

        Row ``k`` of ``U`` is the input applied at step ``k``. Filtering
        always restarts from the initial posterior.
        """
        x0, p0 = self._validate()
        self.belief_ = self._initial_belief(x0, p0)
        return self._run(Y, U)[0]


class ExtendedKalmanFilter(BaseNonlinearFilter):
    """First-order linearization filter.

    ``joseph=True`` switches the covariance update to the Joseph form.
    """

    name = "ekf"

    def __init__(self, plant=None, q_cov=None, r_cov=None, x0=None, p0=None,
                 joseph=False):
        super().__init__(plant, q_cov, r_cov, x0, p0)
        self.joseph = joseph

    def _predict(self, belief, u):
        return _core.ekf_predict(belief, self.plant, u, self.q_)

    def _update(self, belief, u, y, gain_transform):
        return _core.ekf_update(belief, self.plant, u, y, self.r_,
                                gain_transform, joseph=self.joseph)


class CubatureKalmanFilter(BaseNonlinearFilter):
    """Third-degree spherical-radial cubature filter."""

    name = "ckf"

    def _predict(self, belief, u):
        return _core.ckf_predict(belief, self.plant, u, self.q_)

    def _update(self, belief, u, y, gain_transform):
        return _core.ckf_update(belief, self.plant, u, y, self.r_, gain_transform)


class SquareRootCubatureKalmanFilter(BaseNonlinearFilter):
    """Cubature filter that propagates a triangular covariance factor."""

    name = "sckf"

    def _validate(self):
        x0, p0 = super()._validate()
        self.q_sqrt_ = _core._sqrt_or_zero(self.q_)
        self.r_sqrt_ = _core._sqrt_or_zero(self.r_)
        return x0, p0

    def _initial_belief(self, x0, p0):
        return _core.GaussianBelief(x0, sqrt=cholesky_jitter(p0, name="p0"))

    def _predict(self, belief, u):
        return _core.sckf_predict(belief, self.plant, u, self.q_sqrt_)

    def _update(self, belief, u, y, gain_transform):
        return _core.sckf_update(belief, self.plant, u, y, self.r_sqrt_, gain_transform)


FILTERS = {
    "ekf": ExtendedKalmanFilter,
    "ckf": CubatureKalmanFilter,
    "sckf": SquareRootCubatureKalmanFilter,
}
