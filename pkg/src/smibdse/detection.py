"""Residual-based attack detectors: the chi-square test and the Euclidean test."""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import stats
from sklearn.base import BaseEstimator

from .exceptions import ConfigError, SingularityError

CALIBRATION_QUANTILE = 99.9
CALIBRATION_SAFETY = 1.2
MIN_CALIBRATION_RUNS = 20
# from `smibdse calibrate --preset scenario1 --runs 50`
CALIBRATED_EUCLID_THRESHOLD = 1.0297648590723483


@dataclass(frozen=True)
class DetectorConfig:
    chi2_threshold: float = 6.634896601021214
    euclid_threshold: float = CALIBRATED_EUCLID_THRESHOLD
    euclid_window: int = 10

    def __post_init__(self):
        if not self.chi2_threshold > 0 or not self.euclid_threshold > 0:
            raise ConfigError("detector thresholds must be > 0")
        if int(self.euclid_window) != self.euclid_window or self.euclid_window < 1:
            raise ConfigError(f"euclid_window must be a positive integer, got {self.euclid_window}")


@dataclass(frozen=True)
class DetectorVerdict:
    t: float
    g_chi2: float
    d_euclid: float
    chi2_alarm: bool
    euclid_alarm: bool


def residual(measured, predicted_meas):
    return np.asarray(measured, dtype=float) - np.asarray(predicted_meas, dtype=float)


def chi2_statistic(z, innovation_cov):
    """Normalized innovation squared ``z' S^{-1} z``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    cov = np.atleast_2d(np.asarray(innovation_cov, dtype=float))
    try:
        factor = sla.cho_factor(cov, lower=True)
    except np.linalg.LinAlgError:
        raise SingularityError("innovation covariance is not positive definite") from None
    return float(max(z @ sla.cho_solve(factor, z), 0.0))


def chi2_threshold_for(dof, alpha):
    """Upper ``alpha`` critical value of the chi-square distribution."""
    if dof < 1:
        raise ConfigError(f"dof must be >= 1, got {dof}")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return float(stats.chi2.isf(alpha, dof))


def euclidean_statistic(residuals):
    """Root-sum-square of a window of residuals (any shape, non-empty)."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ConfigError("Euclidean statistic needs a non-empty window")
    return float(np.sqrt(np.sum(r * r)))


def calibrate_euclid_threshold(attack_free_runs, quantile=CALIBRATION_QUANTILE,
                               safety=CALIBRATION_SAFETY,
                               min_runs=MIN_CALIBRATION_RUNS):
    """Threshold from the ``d`` sequences of attack-free runs.

    ``attack_free_runs`` is a sequence with one array of ``d`` values per
    run. The threshold is the pooled ``quantile`` percentile times
    ``safety``; it is additionally kept strictly above the largest
    calibration value so no calibration sample would alarm.
    """
    runs = [np.asarray(r, dtype=float).ravel() for r in attack_free_runs]
    if len(runs) < min_runs:
        raise ConfigError(f"calibration needs at least {min_runs} runs, got {len(runs)}")
    pooled = np.concatenate(runs)
    pooled = pooled[np.isfinite(pooled)]
    if pooled.size == 0:
        raise ConfigError("calibration runs contain no finite statistics")
    threshold = safety * float(np.percentile(pooled, quantile))
    peak = float(pooled.max())
    if threshold <= peak:
        threshold = float(np.nextafter(peak, np.inf)) if peak > 0 else threshold
    if not threshold > 0:
        raise ConfigError("calibrated threshold is not positive")
    return threshold


class ChiSquareDetector(BaseEstimator):
    """Alarm when the normalized innovation squared exceeds a chi-square quantile.

    Parameters
    ----------
    alpha : float
        Per-sample false-alarm probability under the nominal model.
    dof : int
        Measurement dimension.
    threshold : float, optional
        Explicit threshold; overrides ``alpha``.
    """

    def __init__(self, alpha=0.01, dof=1, threshold=None):
        self.alpha = alpha
        self.dof = dof
        self.threshold = threshold

    def fit(self, X=None, y=None):
        if self.threshold is not None:
            self.threshold_ = float(self.threshold)
        else:
            self.threshold_ = chi2_threshold_for(self.dof, self.alpha)
        return self

    def statistic(self, z, innovation_cov):
        return chi2_statistic(z, innovation_cov)

    def decision_function(self, G):
        """Margin of statistic(s) ``G`` over the threshold."""
        return np.asarray(G, dtype=float) - self.threshold_

    def predict(self, G):
        return self.decision_function(G) > 0


class EuclideanDetector(BaseEstimator):
    """Sliding-window root-sum-square residual detector.

    ``fit`` calibrates the threshold from attack-free residual sequences
    unless ``threshold`` is given.
    """

    def __init__(self, window=10, threshold=None, quantile=CALIBRATION_QUANTILE,
                 safety=CALIBRATION_SAFETY):
        self.window = window
        self.threshold = threshold
        self.quantile = quantile
        self.safety = safety

    def fit(self, residual_runs=None, y=None):
        if residual_runs is not None:
            self.threshold_ = calibrate_euclid_threshold(
                [self.transform(r) for r in residual_runs],
                self.quantile, self.safety)
        elif self.threshold is not None:
            self.threshold_ = float(self.threshold)
        else:
            raise ConfigError("EuclideanDetector needs a threshold or calibration runs")
        self.reset()
        return self

    def reset(self):
        self.buffer_ = deque(maxlen=int(self.window))

    def update(self, z):
        """Push one residual and return ``d`` over the current window."""
        if not hasattr(self, "buffer_"):
            self.reset()
        self.buffer_.append(np.atleast_1d(np.asarray(z, dtype=float)))
        return euclidean_statistic(np.asarray(self.buffer_))

    def transform(self, residuals):
        """``d`` for every sample of a residual sequence, starting empty."""
        buf = deque(maxlen=int(self.window))
        out = np.empty(len(residuals))
        for k, z in enumerate(residuals):
            buf.append(np.atleast_1d(np.asarray(z, dtype=float)))
            out[k] = euclidean_statistic(np.asarray(buf))
        return out

    def decision_function(self, D):
        return np.asarray(D, dtype=float) - self.threshold_

    def predict(self, D):
        return self.decision_function(D) > 0
