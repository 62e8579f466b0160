"""Input validation helpers used by the estimators and the harness."""

import numpy as np

from .exceptions import ConfigError, NumericalError


def check_vector(x, dim=None, name="x"):
    """Return ``x`` as a finite 1-D float array, optionally of length ``dim``."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ConfigError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigError(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def check_square(a, dim=None, name="matrix"):
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"{name} must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigError(f"{name} must be {dim}x{dim}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def check_spd(a, dim=None, name="covariance", allow_zero=False):
    """Validate a symmetric positive-definite matrix.

    With ``allow_zero`` an all-zero matrix is accepted as well; that is how a
    noise-free channel is expressed.
    """
    arr = check_square(a, dim, name)
    if not np.allclose(arr, arr.T, rtol=1e-10, atol=1e-14):
        raise ConfigError(f"{name} is not symmetric")
    if allow_zero and not np.any(arr):
        return arr
    try:
        np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} is not positive definite") from None
    return arr


def check_finite(x, name="value", step=None):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{name} is not finite", step=step)
    return x


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigError(f"{name} must be {bound}, got {value}")
    return value
