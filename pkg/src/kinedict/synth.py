"""Seeded synthetic datasets with ground truth for oracles and demos.

Every generator returns ``(data, truth)``: sample rows plus a JSON-friendly
dict describing what was planted.
"""

from __future__ import annotations

import numpy as np

from . import quat
from .errors import InvalidInputError

GENERATORS = ("clusters", "arcs", "planted-euclidean")


def _rng(seed):
    return np.random.default_rng(seed)


def spread_centers(rng, k, max_angle=150.0, min_separation=60.0, max_tries=100000):
    """``k`` canonical rotations within ``max_angle`` degrees of identity, pairwise
    at least ``min_separation`` degrees apart (rejection sampling)."""
    out = []
    tries = 0
    while len(out) < k:
        tries += 1
        if tries > max_tries:
            raise InvalidInputError("cannot place centers with the requested separation")
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.deg2rad(max_angle) * rng.random() ** (1.0 / 3.0)
        q = quat.from_rotvec(axis * angle)
        if all(np.rad2deg(quat.geodesic_distance(q, c)) >= min_separation for c in out):
            out.append(q)
    return np.array(out)


def clusters(k=8, n=2000, spread=2.0, seed=0, max_angle=150.0, min_separation=60.0):
    """Samples around ``k`` centers with isotropic tangent-space Gaussian spread.

    ``spread`` is the per-axis standard deviation of the perturbing rotation
    vector, in degrees. Centers lie within ``max_angle`` of identity and are
    ``min_separation`` apart, so no cluster straddles the ``w = 0`` boundary
    where canonicalization would split it.
    """
    if k < 1 or n < 1 or spread < 0:
        raise InvalidInputError("clusters needs k >= 1, n >= 1, spread >= 0")
    rng = _rng(seed)
    centers = spread_centers(rng, k, max_angle, min_separation)
    labels = rng.integers(k, size=n)
    noise = rng.normal(size=(n, 3)) * np.deg2rad(spread)
    data = quat.perturb(centers[labels], noise)
    truth = {
        "generator": "clusters",
        "centers": centers.tolist(),
        "labels": labels.tolist(),
        "spread_deg": float(spread),
    }
    return data, truth


def arcs(n_arcs=6, n=2000, length=(20.0, 60.0), width=0.0, seed=0, max_angle=120.0):
    """Samples along geodesic arcs between random endpoint pairs.

    Arc lengths are uniform in ``length`` (degrees); the position along the
    arc is uniform in the slerp parameter. ``width`` adds a tangent-space
    Gaussian jitter (degrees, per axis), giving thin anisotropic tubes.
    """
    lo, hi = length
    if n_arcs < 1 or n < 1 or not 0 <= lo <= hi < 180.0 or width < 0:
        raise InvalidInputError("invalid arc parameters")
    rng = _rng(seed)
    starts = spread_centers(rng, n_arcs, max_angle, min_separation=0.0)
    ends = []
    for s in starts:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ends.append(quat.multiply(s, quat.from_rotvec(axis * np.deg2rad(rng.uniform(lo, hi)))))
    ends = np.array(ends)
    ends = np.where(np.sum(starts * ends, axis=1, keepdims=True) < 0, -ends, ends)
    labels = rng.integers(n_arcs, size=n)
    x1 = rng.random(n)
    data = np.array([quat.slerp(x, starts[a], ends[a]) for x, a in zip(x1, labels)])
    if width > 0:
        data = quat.perturb(data, rng.normal(size=(n, 3)) * np.deg2rad(width))
    truth = {
        "generator": "arcs",
        "starts": quat.canonicalize(starts).tolist(),
        "ends": quat.canonicalize(ends).tolist(),
        "labels": labels.tolist(),
        "x1": x1.tolist(),
        "width_deg": float(width),
    }
    return quat.canonicalize(data), truth


def planted_euclidean(d=10, n_atoms=12, n=4000, support=3, noise=0.01, seed=0):
    """Sparse convex combinations of a hidden unit-norm dictionary plus noise.

    Each sample draws a support of size ``1..support`` uniformly and
    Dirichlet(1) weights on it, then adds isotropic Gaussian noise of standard
    deviation ``noise``.
    """
    if d < 1 or n_atoms < 1 or n < 1 or not 1 <= support <= n_atoms or noise < 0:
        raise InvalidInputError("invalid planted-euclidean parameters")
    rng = _rng(seed)
    D = rng.normal(size=(d, n_atoms))
    D /= np.linalg.norm(D, axis=0)
    G = np.zeros((n_atoms, n))
    X = np.empty((d, n))
    for i in range(n):
        s = rng.integers(1, support + 1)
        idx = rng.choice(n_atoms, size=s, replace=False)
        g = rng.dirichlet(np.ones(s))
        G[idx, i] = g / g.sum()
        # summing over the support only keeps single-atom samples exact
        X[:, i] = D[:, idx] @ G[idx, i]
    X += noise * rng.normal(size=(d, n))
    truth = {
        "generator": "planted-euclidean",
        "atoms": D.T.tolist(),
        "codes": G.T.tolist(),
        "noise": float(noise),
    }
    return X.T, truth


def generate(name, seed=0, **params):
    if name == "clusters":
        return clusters(seed=seed, **params)
    if name == "arcs":
        return arcs(seed=seed, **params)
    if name == "planted-euclidean":
        return planted_euclidean(seed=seed, **params)
    raise InvalidInputError(f"unknown generator {name!r}; expected one of {GENERATORS}")
