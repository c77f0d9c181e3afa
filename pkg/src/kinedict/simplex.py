"""Sparsemax: Euclidean projection onto the probability simplex."""

import numpy as np

from . import _kernels
from .errors import InvalidInputError


def _check(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.size == 0:
        raise InvalidInputError("sparsemax needs at least one entry")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("sparsemax input has non-finite entries")
    return z


def sparsemax(z, axis=-1):
    """Project ``z`` onto the probability simplex along ``axis``.

    Sort-and-threshold: with ``z`` sorted descending, ``k`` is the largest
    index with ``1 + k z_(k) > sum_{j<=k} z_(j)``, the threshold is
    ``tau = (sum_{j<=k} z_(j) - 1) / k`` and the output is ``max(z - tau, 0)``.
    Clipped entries are exact zeros.

    Parameters
    ----------
    z : array_like
        Logits. Any shape; each 1-D slice along ``axis`` is projected.
    axis : int
        Axis holding the simplex coordinates.

    Returns
    -------
    ndarray
        Same shape as ``z``.
    """
    z = _check(z)
    if z.shape[axis] == 0:
        raise InvalidInputError("sparsemax needs at least one entry")
    moved = np.moveaxis(z, axis, -1)
    rows = np.ascontiguousarray(moved.reshape(-1, moved.shape[-1]))
    out = _kernels.sparsemax_rows(rows).reshape(moved.shape)
    return np.moveaxis(out, -1, axis)


def support(p, axis=-1):
    """Boolean mask of strictly positive entries."""
    return np.asarray(p) > 0.0


def sparsemax_jacobian(z):
    """Jacobian of sparsemax at a single vector ``z``.

    ``J = Diag(s) - s s^T / |S|`` with ``s`` the indicator of the support of
    ``sparsemax(z)``. At points where the support changes this is the
    subgradient consistent with the computed output.
    """
    z = _check(z)
    if z.ndim != 1:
        raise InvalidInputError("sparsemax_jacobian takes a single vector")
    s = (sparsemax(z) > 0.0).astype(np.float64)
    return np.diag(s) - np.outer(s, s) / s.sum()


def sparsemax_vjp(p, g, axis=-1):
    """Vector-Jacobian product ``J^T g`` given the sparsemax output ``p``.

    ``J`` is symmetric, so this is also ``J g``: on the support, ``g`` minus
    its support mean; zero elsewhere.
    """
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    s = p > 0.0
    mean = np.sum(np.where(s, g, 0.0), axis=axis, keepdims=True) / np.sum(s, axis=axis, keepdims=True)
    return np.where(s, g - mean, 0.0)


def on_simplex(p, tol=1e-12, axis=-1):
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all(p >= 0.0) and np.all(np.abs(p.sum(axis=axis) - 1.0) <= tol))
