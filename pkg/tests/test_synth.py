import numpy as np
import pytest
from numpy.testing import assert_allclose

from kinedict import quat, synth
from kinedict.errors import InvalidInputError


def test_single_cluster_without_spread():
    X, truth = synth.clusters(k=1, n=50, spread=0.0, seed=3)
    assert np.all(X == X[0])
    assert_allclose(X[0], truth["centers"][0], atol=1e-15)


def test_cluster_spread(rng):
    X, truth = synth.clusters(k=4, n=2000, spread=2.0, seed=0)
    C = np.array(truth["centers"])
    lab = np.array(truth["labels"])
    d = np.rad2deg(quat.geodesic_distance(X, C[lab]))
    # per-axis sd 2 deg gives a chi(3) angle: mean 2 * sqrt(8 / pi)
    assert abs(d.mean() - 2.0 * np.sqrt(8 / np.pi)) < 0.1
    assert quat.is_canonical(X) and quat.is_unit(X)


def test_arcs_within_endpoints():
    X, truth = synth.arcs(n_arcs=3, n=300, length=(10.0, 10.0), seed=2)
    S, E = np.array(truth["starts"]), np.array(truth["ends"])
    lab = np.array(truth["labels"])
    for x, a in zip(X, lab):
        assert np.rad2deg(quat.geodesic_distance(x, S[a])) <= 10 + 1e-9
        assert np.rad2deg(quat.geodesic_distance(x, E[a])) <= 10 + 1e-9
    assert_allclose(np.rad2deg(quat.geodesic_distance(S, E)), 10.0, atol=1e-9)


def test_arc_parameter_weights_start():
    X, truth = synth.arcs(n_arcs=1, n=20, length=(30.0, 30.0), seed=5)
    S = np.array(truth["starts"][0])
    x1 = np.array(truth["x1"])
    assert_allclose(np.rad2deg(quat.geodesic_distance(X, S)), 30.0 * (1 - x1), atol=1e-9)


def test_planted_noise_free_single_support():
    X, truth = synth.planted_euclidean(d=6, n_atoms=5, n=100, support=1, noise=0.0, seed=1)
    A = np.array(truth["atoms"])
    for x in X:
        assert np.min(np.max(np.abs(A - x), axis=1)) == 0.0


def test_planted_codes_on_simplex():
    X, truth = synth.planted_euclidean(n=200, seed=4)
    G = np.array(truth["codes"])
    assert np.all(G >= 0)
    assert_allclose(G.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.count_nonzero(G, axis=1) <= 3)
    assert_allclose(np.linalg.norm(truth["atoms"], axis=1), 1.0, atol=1e-12)


def test_seeded():
    a, _ = synth.generate("arcs", seed=9, n=50)
    b, _ = synth.generate("arcs", seed=9, n=50)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize(
    "name,params",
    [("clusters", {"k": 0}), ("arcs", {"length": (50.0, 10.0)}), ("planted-euclidean", {"support": 0}),
     ("spirals", {})],
)
def test_invalid(name, params):
    with pytest.raises(InvalidInputError):
        synth.generate(name, **params)
