"""Per-phase filter operations shared by the estimator classes.

Each function takes a :class:`GaussianBelief` and returns a new one; nothing
is mutated in place. Points are stored row-wise, ``(m, n)``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla

from ..exceptions import NumericalError, SingularityError
from ..linalg import cholesky_jitter, symmetrize, tria

GainTransform = Optional[Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class GaussianBelief:
    """Mean plus either a full covariance or a lower-triangular square root."""

    mean: np.ndarray
    cov: Optional[np.ndarray] = None
    sqrt: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.cov is None) == (self.sqrt is None):
            raise ValueError("exactly one of cov and sqrt must be given")

    @property
    def covariance(self):
        if self.cov is not None:
            return self.cov
        return self.sqrt @ self.sqrt.T

    @property
    def dim(self):
        return self.mean.shape[0]


@dataclass(frozen=True)
class CubatureSet:
    points: np.ndarray  # (2n, n) unit points xi_i
    weight: float


@dataclass(frozen=True)
class UpdateArtifacts:
    """Quantities produced by one measurement update.

    ``gain`` is the gain the filter computed; ``applied_gain`` is the one
    actually used on the state, which differs only when a gain transform
    (e.g. a manipulated gain) is active.
    """

    predicted_meas: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray
    cross_cov: np.ndarray
    gain: np.ndarray
    applied_gain: np.ndarray


def cubature_points(n) -> CubatureSet:
    """Third-degree spherical-radial points ``+-sqrt(n) e_i`` with equal weights."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    scaled = np.sqrt(n) * np.eye(n)
    return CubatureSet(np.vstack([scaled, -scaled]), 1.0 / (2 * n))


def _spread(mean, factor):
    xi = cubature_points(mean.shape[0]).points
    return mean + xi @ factor.T


def _check(arr, what, step=None):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} is not finite", step=step)
    return arr


def _apply_gain(gain, gain_transform: GainTransform):
    if gain_transform is None:
        return gain
    return np.asarray(gain_transform(gain), dtype=float)


def _sqrt_or_zero(cov):
    if not np.any(cov):
        return np.zeros_like(cov)
    return cholesky_jitter(cov, name="noise covariance")


# -- extended Kalman filter -------------------------------------------------

def ekf_predict(belief: GaussianBelief, model, u, q_cov):
    f_jac = _check(model.jac_f(belief.mean, u), "state Jacobian")
    mean = _check(np.asarray(model.f(belief.mean, u), dtype=float), "predicted mean")
    cov = f_jac @ belief.cov @ f_jac.T + q_cov
    return GaussianBelief(mean, cov=symmetrize(cov))


def ekf_update(belief: GaussianBelief, model, u, y, r_cov,
               gain_transform: GainTransform = None, joseph=False):
    """Linearized measurement update.

    The covariance uses ``(I - K H) P`` unless ``joseph`` is set or the gain
    is being transformed.
    """
    h_jac = _check(model.jac_h(belief.mean, u), "measurement Jacobian")
    y_hat = np.atleast_1d(np.asarray(model.h(belief.mean, u), dtype=float))
    p_prior = belief.cov
    s_cov = h_jac @ p_prior @ h_jac.T + r_cov
    cross = p_prior @ h_jac.T
    gain = _solve_gain(cross, s_cov)
    applied = _apply_gain(gain, gain_transform)
    innov = np.atleast_1d(y) - y_hat
    mean = belief.mean + applied @ innov
    eye = np.eye(belief.dim)
    # a tampered gain is not optimal, so only the Joseph form stays valid
    if joseph or gain_transform is not None:
        a = eye - applied @ h_jac
        cov = a @ p_prior @ a.T + applied @ r_cov @ applied.T
    else:
        cov = (eye - applied @ h_jac) @ p_prior
    arts = UpdateArtifacts(y_hat, innov, s_cov, cross, gain, applied)
    return GaussianBelief(_check(mean, "posterior mean"), cov=symmetrize(cov)), arts


def _solve_gain(cross, s_cov):
    # gain = cross @ inv(s_cov), via a solve on the symmetric system
    try:
        chol = sla.cho_factor(s_cov, lower=True)
    except np.linalg.LinAlgError:
        raise SingularityError("innovation covariance is not positive definite") from None
    return sla.cho_solve(chol, cross.T).T


# -- cubature Kalman filter ---------------------------------------------------

def ckf_predict(belief: GaussianBelief, model, u, q_cov):
    m = 2 * belief.dim
    factor = cholesky_jitter(belief.cov, name="posterior covariance")
    propagated = np.asarray(model.f(_spread(belief.mean, factor), u), dtype=float)
    _check(propagated, "propagated cubature points")
    mean = propagated.sum(axis=0) / m
    # centered sums: same value as sum(X X')/m - mean mean', without the cancellation
    centered = propagated - mean
    cov = centered.T @ centered / m + q_cov
    return GaussianBelief(mean, cov=symmetrize(cov))


def ckf_update(belief: GaussianBelief, model, u, y, r_cov,
               gain_transform: GainTransform = None):
    m = 2 * belief.dim
    factor = cholesky_jitter(belief.cov, name="predicted covariance")
    points = _spread(belief.mean, factor)
    z_pts = np.atleast_2d(np.asarray(model.h(points, u), dtype=float))
    _check(z_pts, "propagated measurement points")
    z_hat = z_pts.sum(axis=0) / m
    z_c = z_pts - z_hat
    p_zz = z_c.T @ z_c / m + r_cov
    p_xz = (points - belief.mean).T @ z_c / m
    gain = _solve_gain(p_xz, symmetrize(p_zz))
    applied = _apply_gain(gain, gain_transform)
    innov = np.atleast_1d(y) - z_hat
    mean = belief.mean + applied @ innov
    if gain_transform is None:
        cov = belief.cov - applied @ p_zz @ applied.T
    else:
        # general form for an arbitrary gain; reduces to the line above
        # when the gain is the optimal one
        cov = belief.cov - applied @ p_xz.T - p_xz @ applied.T + applied @ p_zz @ applied.T
    arts = UpdateArtifacts(z_hat, innov, symmetrize(p_zz), p_xz, gain, applied)
    return GaussianBelief(_check(mean, "posterior mean"), cov=symmetrize(cov)), arts


# -- square-root cubature Kalman filter --------------------------------------

def sckf_predict(belief: GaussianBelief, model, u, q_sqrt):
    m = 2 * belief.dim
    propagated = np.asarray(model.f(_spread(belief.mean, belief.sqrt), u), dtype=float)
    _check(propagated, "propagated cubature points")
    mean = propagated.sum(axis=0) / m
    centered = (propagated - mean).T / np.sqrt(m)
    return GaussianBelief(mean, sqrt=tria(np.hstack([centered, q_sqrt])))


def sckf_update(belief: GaussianBelief, model, u, y, r_sqrt,
                gain_transform: GainTransform = None):
    m = 2 * belief.dim
    points = _spread(belief.mean, belief.sqrt)
    z_pts = np.atleast_2d(np.asarray(model.h(points, u), dtype=float))
    _check(z_pts, "propagated measurement points")
    z_hat = z_pts.sum(axis=0) / m
    z_c = (z_pts - z_hat).T / np.sqrt(m)
    x_c = (points - belief.mean).T / np.sqrt(m)
    s_zz = tria(np.hstack([z_c, r_sqrt]))
    if np.any(np.diag(s_zz) <= 0):
        raise SingularityError("innovation square-root factor is singular")
    p_xz = x_c @ z_c.T
    # W = (P_xz / S_zz^T) / S_zz, i.e. two triangular solves
    tmp = sla.solve_triangular(s_zz, p_xz.T, lower=True)
    gain = sla.solve_triangular(s_zz.T, tmp, lower=False).T
    applied = _apply_gain(gain, gain_transform)
    innov = np.atleast_1d(y) - z_hat
    mean = belief.mean + applied @ innov
    sqrt = tria(np.hstack([x_c - applied @ z_c, applied @ r_sqrt]))
    arts = UpdateArtifacts(z_hat, innov, s_zz @ s_zz.T, p_xz, gain, applied)
    return GaussianBelief(_check(mean, "posterior mean"), sqrt=sqrt), arts
