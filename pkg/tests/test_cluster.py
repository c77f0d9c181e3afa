import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from kinedict import quat, synth
from kinedict.cluster import (
    CoverageReport,
    _lloyd,
    _plusplus,
    chordal_inertia,
    coverage,
    geodesic_inertia,
    kmeans_quat,
    reconstruction_errors,
)
from kinedict.errors import InvalidInputError
from kinedict.obdl import Dictionary


def brute_lloyd(X, k, rng, iters=100):
    """Plain Lloyd from random data points, written without the library."""
    C = X[rng.choice(len(X), size=k, replace=False)].copy()
    for _ in range(iters):
        lab = np.argmax(np.abs(X @ C.T), axis=1)
        newC = C.copy()
        for j in range(k):
            M = X[lab == j]
            if len(M):
                M = M * np.sign(M @ C[j] + 1e-300)[:, None]
                newC[j] = M.sum(0) / np.linalg.norm(M.sum(0))
        if np.allclose(newC, C):
            break
        C = newC
    return C


class TestKmeans:
    def test_one_centroid_per_point(self, rng):
        X = quat.random_uniform(rng, 5)
        D = kmeans_quat(X, 5, seed=0)
        C = D.atoms.T
        for x in X:
            assert np.min(quat.geodesic_distance(C, x)) < 1e-12
        assert D.provenance["method"] == "kmeans"

    def test_antipodal_copies_collapse(self, rng):
        c = quat.random_uniform(rng)
        noise = rng.normal(size=(40, 3)) * np.deg2rad(0.5)
        A = quat.perturb(np.repeat(c[None], 40, axis=0), noise)
        X = np.vstack([A[:20], -A[20:]])
        D = kmeans_quat(X, 1, seed=0)
        assert np.rad2deg(quat.geodesic_distance(D.atoms[:, 0], c)) < 0.5

    def test_matches_multi_restart_oracle(self):
        X, truth = synth.clusters(k=8, n=800, spread=2.0, seed=4)
        D = kmeans_quat(X, 8, seed=0)
        ours = geodesic_inertia(X, D.atoms.T)
        rng = np.random.default_rng(99)
        oracle = min(geodesic_inertia(X, brute_lloyd(X, 8, rng)) for _ in range(50))
        assert ours <= 1.05 * oracle

    def test_inertia_non_increasing(self, rng):
        X, _ = synth.clusters(k=5, n=400, spread=8.0, seed=1)
        X = quat.as_unit(X)
        C0 = quat.canonicalize(_plusplus(X, 5, rng))
        _, _, hist = _lloyd(X, C0, 100)
        assert np.all(np.diff(hist) <= 1e-12)

    def test_more_clusters_than_points(self, rng):
        X = quat.random_uniform(rng, 3)
        D = kmeans_quat(X, 5, seed=0)
        assert D.n_atoms == 5
        assert D.provenance["duplicate_centroids"] is True

    def test_deterministic(self):
        X, _ = synth.clusters(k=4, n=200, seed=3)
        a, b = kmeans_quat(X, 4, seed=2), kmeans_quat(X, 4, seed=2)
        assert a.atoms.tobytes() == b.atoms.tobytes()

    def test_rejects_bad_count(self, rng):
        with pytest.raises(InvalidInputError):
            kmeans_quat(quat.random_uniform(rng, 4), 0)

    def test_chordal_inertia(self, rng):
        X = quat.random_uniform(rng, 10)
        C = quat.random_uniform(rng, 3)
        lab = rng.integers(3, size=10)
        ref = sum(1 - abs(np.dot(x, C[l])) for x, l in zip(X, lab))
        assert_allclose(chordal_inertia(X, C, lab), ref, atol=1e-12)


class TestCoverage:
    def test_samples_as_atoms(self, rng):
        X = quat.random_uniform(rng, 12)
        rep = coverage(Dictionary(X.T), X, threshold=0.0)
        assert rep.ratio == 1.0
        assert len(rep.per_sample_errors) == 12

    def test_ratio_definition(self, rng):
        D = Dictionary(quat.random_uniform(rng, 4).T)
        X = quat.random_uniform(rng, 30)
        rep = coverage(D, X, threshold=40.0)
        errs = np.array(rep.per_sample_errors)
        assert rep.ratio == np.count_nonzero(errs <= 40.0) / 30
        assert np.all(np.isfinite(errs))

    def test_monotone_in_threshold(self, rng):
        D = Dictionary(quat.random_uniform(rng, 6).T)
        X = quat.random_uniform(rng, 40)
        ratios = [coverage(D, X, threshold=t).ratio for t in (0, 5, 20, 45, 90, 180)]
        assert ratios == sorted(ratios)
        assert ratios[-1] == 1.0

    def test_permutation_and_sign_invariance(self, rng):
        A = quat.random_uniform(rng, 6)
        X = quat.random_uniform(rng, 40)
        base = reconstruction_errors(Dictionary(A.T), X)
        perm = rng.permutation(6)
        flip = np.where(rng.random(6) < 0.5, -1.0, 1.0)[:, None]
        other = reconstruction_errors(Dictionary((flip * A)[perm].T), X)
        # the code problem is convex in D gamma, so errors agree to solver tolerance
        assert_allclose(other, base, atol=1e-2)
        for t in (10.0, 30.0, 60.0):
            a = coverage(Dictionary(A.T), X, t).ratio
            b = coverage(Dictionary((flip * A)[perm].T), X, t).ratio
            near = np.any(np.abs(base - t) < 1e-2)
            assert a == b or near

    def test_report_serialization(self, tmp_path, rng):
        rep = coverage(Dictionary(quat.random_uniform(rng, 3).T), quat.random_uniform(rng, 5))
        rep.save(tmp_path / "r.json")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["N"] == 3 and doc["threshold"] == 5.0
        rep.save_errors_csv(tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "sample,error_deg" and len(lines) == 6
        assert isinstance(rep, CoverageReport)

    def test_rejects_euclidean(self):
        with pytest.raises(InvalidInputError):
            coverage(Dictionary(np.eye(3), mode="euclidean"), np.eye(3))


def test_seeded_centers_spread():
    C = synth.spread_centers(np.random.default_rng(0), 8)
    d = np.rad2deg(quat.geodesic_distance(C[:, None], C[None]))
    assert_array_equal(np.diag(d), 0.0)
    assert d[~np.eye(8, dtype=bool)].min() >= 60.0
