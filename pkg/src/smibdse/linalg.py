"""Small dense linear-algebra primitives for the filters."""

import numpy as np
from scipy import linalg as sla

from .exceptions import NumericalError, SingularityError

JITTER_SCALE = 1e-9


def tria(m):
    """Lower-triangular ``L`` with ``L @ L.T == m @ m.T``.

    Computed from the R factor of a QR decomposition of ``m.T``; the sign of
    each column is chosen so the diagonal is non-negative, which makes the
    result unique for full-row-rank input.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    rows, cols = m.shape
    if rows > cols:
        raise ValueError(f"tria needs rows <= columns, got {m.shape}")
    r = sla.qr(m.T, mode="r")[0][:rows, :rows]
    lower = r.T
    signs = np.where(np.diag(lower) < 0, -1.0, 1.0)
    return lower * signs


def cholesky_jitter(p, name="covariance", step=None):
    """Lower Cholesky factor of ``p``.

    On failure a single diagonal jitter of ``1e-9 * trace(p) / n`` is added
    and the factorization retried; a second failure raises.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise NumericalError(f"{name} is not finite", step=step)
    try:
        return np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        pass
    n = p.shape[0]
    jitter = JITTER_SCALE * abs(np.trace(p)) / n
    try:
        return np.linalg.cholesky(p + jitter * np.eye(n))
    except np.linalg.LinAlgError:
        raise SingularityError(f"{name} is not positive definite", step=step) from None


def symmetrize(p):
    return 0.5 * (p + p.T)


def jacobian_fd(func, x, rel_step=1e-6):
    """Central-difference Jacobian of ``func`` at ``x``.

    The perturbation of coordinate ``i`` is ``rel_step * max(1, |x_i|)``.
    All ``2n`` perturbed points are evaluated in one batched call.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    steps = rel_step * np.maximum(1.0, np.abs(x))
    offsets = np.diag(steps)
    points = np.concatenate([x + offsets, x - offsets])
    values = np.atleast_2d(np.asarray(func(points), dtype=float))
    if values.shape[0] != 2 * n:
        # func did not broadcast; fall back to pointwise evaluation
        values = np.array([np.atleast_1d(func(pt)) for pt in points])
    jac = (values[:n] - values[n:]).T / (2.0 * steps)
    if not np.all(np.isfinite(jac)):
        raise NumericalError("finite-difference Jacobian is not finite")
    return jac
