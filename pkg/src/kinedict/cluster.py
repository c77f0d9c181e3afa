"""Spherical k-means on quaternions and the coverage-ratio metric."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import quat
from .errors import InvalidInputError
from .obdl import Dictionary, InnerConfig, update_codes


def _abs_dots(X, C):
    return np.abs(X @ C.T)


def chordal_inertia(X, C, labels):
    """Sum of ``1 - |<x, c>|`` over members; the quantity Lloyd steps decrease."""
    return float(np.sum(1.0 - np.abs(np.sum(X * C[labels], axis=1))))


def geodesic_inertia(X, C):
    """Sum of squared geodesic distances (radians) to the nearest centroid."""
    ang = quat.geodesic_distance(X[:, None, :], C[None, :, :])
    return float(np.sum(ang.min(axis=1) ** 2))


def _plusplus(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = 2.0 * (1.0 - np.abs(X @ centers[0]))
    for _ in range(1, k):
        d2 = np.maximum(d2, 0.0)
        total = d2.sum()
        idx = rng.integers(n) if total <= 0.0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, 2.0 * (1.0 - np.abs(X @ X[idx])))
    return np.array(centers)


def _lloyd(X, C, max_iters):
    history = []
    labels = np.argmax(_abs_dots(X, C), axis=1)
    for _ in range(max_iters):
        history.append(chordal_inertia(X, C, labels))
        newC = C.copy()
        for j in range(C.shape[0]):
            members = X[labels == j]
            if members.shape[0] == 0:
                continue
            signs = np.where(members @ C[j] < 0.0, -1.0, 1.0)
            m = (signs[:, None] * members).sum(axis=0)
            nm = np.linalg.norm(m)
            if nm > 1e-12:
                newC[j] = quat.canonicalize(m / nm)
        sim = _abs_dots(X, newC)
        new_labels = np.argmax(sim, axis=1)
        counts = np.bincount(new_labels, minlength=C.shape[0])
        for j in np.flatnonzero(counts == 0):
            # re-seed from the point worst served by its centroid
            far = int(np.argmin(sim[np.arange(X.shape[0]), new_labels]))
            newC[j] = X[far]
            sim = _abs_dots(X, newC)
            new_labels = np.argmax(sim, axis=1)
        C = newC
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    history.append(chordal_inertia(X, C, labels))
    return C, labels, history


def kmeans_quat(data, n_clusters, seed=0, max_iters=100, n_init=10, joint_label=""):
    """Spherical k-means under the double cover.

    k-means++ seeding with chordal distance ``2(1 - |<x, c>|)``, assignment to
    the geodesically nearest centroid, centroids as the normalized mean of
    members sign-aligned to the current centroid. Empty clusters are re-seeded
    from the point farthest from its centroid. The best of ``n_init`` seeded
    runs (lowest chordal inertia) is returned as a quaternion Dictionary.
    """
    X = quat.as_unit(np.asarray(data, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("data must be a nonempty (n, 4) array")
    if n_clusters <= 0:
        raise InvalidInputError("n_clusters must be positive")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        C0 = _plusplus(X, n_clusters, rng)
        C, labels, history = _lloyd(X, quat.canonicalize(C0), max_iters)
        if best is None or history[-1] < best[2][-1]:
            best = (C, labels, history)
    C, labels, history = best
    prov = {
        "method": "kmeans",
        "seed": seed,
        "max_iters": max_iters,
        "n_init": n_init,
        "inertia": history[-1],
        "iterations": len(history) - 1,
        "duplicate_centroids": bool(n_clusters > X.shape[0]),
    }
    return Dictionary(C.T, "quaternion", joint_label, prov)


@dataclass
class CoverageReport:
    method: str
    N: int
    threshold: float
    ratio: float
    per_sample_errors: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def save_errors_csv(self, path):
        lines = ["sample,error_deg"] + [f"{i},{e!r}" for i, e in enumerate(self.per_sample_errors)]
        Path(path).write_text("\n".join(lines) + "\n")


def _polish(atoms, X, G):
    """Exact least squares on each column's support, kept when feasible and no worse.

    The iterative solve stops within tolerance of the optimum; on the right
    support the equality-constrained problem has a closed form, which makes
    errors independent of atom order up to rounding.
    """
    G = G.copy()
    for k in range(X.shape[1]):
        S = np.flatnonzero(G[:, k] > 0.0)
        if S.size < 2:
            continue
        A = atoms[:, S]
        m = S.size
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = A.T @ A
        K[:m, m] = K[m, :m] = 1.0
        rhs = np.r_[A.T @ X[:, k], 1.0]
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0][:m]
        if np.all(sol >= 0.0):
            g = np.zeros(G.shape[0])
            g[S] = sol / sol.sum()
            if np.sum((atoms @ g - X[:, k]) ** 2) <= np.sum((atoms @ G[:, k] - X[:, k]) ** 2):
                G[:, k] = g
    return G


def reconstruction_errors(D: Dictionary, data, restarts=4, seed=0, inner=InnerConfig()):
    """Best geodesic reconstruction error (degrees) of each sample.

    Candidates are the codes from ``restarts`` seeded code solves (each
    polished by an exact solve on its support) and every one-hot code, so a
    sample that equals an atom always gets error 0.
    """
    if D.mode != "quaternion":
        raise InvalidInputError("coverage needs a quaternion dictionary")
    X = quat.as_unit(np.atleast_2d(np.asarray(data, dtype=np.float64)))
    atoms = D.atoms
    best = np.min(np.rad2deg(quat.geodesic_distance(X[:, None, :], atoms.T[None, :, :])), axis=1)
    rng = np.random.default_rng(seed)
    for _ in range(max(1, restarts)):
        cb = update_codes(atoms, X.T, inner, rng=rng)
        G = _polish(atoms, X.T, cb.codes)
        rec = quat.nlerp(G.T, atoms.T)
        err = np.rad2deg(quat.geodesic_distance(rec, X))
        best = np.minimum(best, err)
    return best


def coverage(D: Dictionary, data, threshold=5.0, restarts=4, seed=0, inner=InnerConfig()) -> CoverageReport:
    """Fraction of samples reconstructed within ``threshold`` degrees."""
    errs = reconstruction_errors(D, data, restarts, seed, inner)
    ratio = float(np.count_nonzero(errs <= threshold)) / errs.size
    return CoverageReport(
        method=str(D.provenance.get("method", "unknown")),
        N=D.n_atoms,
        threshold=float(threshold),
        ratio=ratio,
        per_sample_errors=[float(e) for e in errs],
    )
