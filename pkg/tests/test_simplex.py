import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from kinedict.errors import InvalidInputError
from kinedict.simplex import on_simplex, sparsemax, sparsemax_jacobian, sparsemax_vjp, support

from oracles import sparsemax_qp

vectors = st.integers(1, 8).flatmap(
    lambda n: st.lists(st.floats(-10, 10, allow_nan=False, width=64), min_size=n, max_size=n)
)


def test_examples():
    assert_array_equal(sparsemax([0.5, 0.5]), [0.5, 0.5])
    for c in (-3.0, 0.0, 7.25):
        assert_allclose(sparsemax([c, c, c]), [1 / 3] * 3, atol=1e-15)
    assert_allclose(sparsemax([1.1, 1.0, -5.0]), [0.55, 0.45, 0.0], atol=1e-15)
    assert_array_equal(sparsemax([2.0, 0.0]), [1.0, 0.0])
    assert_array_equal(sparsemax([3.0]), [1.0])


def test_oracle_examples():
    for z in ([1.1, 1.0, -5.0], [2.0, 0.0]):
        ref, _ = sparsemax_qp(z)
        assert_allclose(sparsemax(z), ref, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(vectors)
def test_matches_qp_oracle(z):
    p = sparsemax(z)
    ref, cands = sparsemax_qp(z)
    assert_allclose(p, ref, atol=1e-8)
    assert np.all(p >= 0.0)
    assert abs(p.sum() - 1.0) <= 1e-12
    # projection property against every vertex and KKT candidate
    d = np.sum((p - z) ** 2)
    for c in cands + list(np.eye(len(z))):
        assert d <= np.sum((c - z) ** 2) + 1e-9


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(-1e3, 1e3))
def test_translation_invariance(z, c):
    z = np.array(z)
    # integer-valued shifts of dyadic inputs are exact in floating point
    zq = np.round(z * 8) / 8
    cq = float(np.round(c))
    assert_array_equal(sparsemax(zq + cq), sparsemax(zq))
    # general shifts agree to rounding of z + c
    assert_allclose(sparsemax(z + c), sparsemax(z), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(vectors, st.randoms(use_true_random=False))
def test_permutation_equivariance(z, r):
    z = np.array(z)
    perm = list(range(z.size))
    r.shuffle(perm)
    assert_allclose(sparsemax(z[perm]), sparsemax(z)[perm], atol=1e-15)


def test_idempotent_on_simplex(rng):
    for n in range(1, 9):
        p = rng.dirichlet(np.ones(n), size=50)
        assert_allclose(sparsemax(p), p, atol=1e-15)


def test_axis_and_batch(rng):
    Z = rng.normal(size=(5, 7))
    rows = np.array([sparsemax(z) for z in Z])
    assert_array_equal(sparsemax(Z), rows)
    assert_array_equal(sparsemax(Z.T, axis=0), rows.T)
    assert on_simplex(sparsemax(Z.T, axis=0), axis=0)


def test_exact_zeros():
    p = sparsemax([5.0, 0.0, -1.0])
    assert p[1] == 0.0 and p[2] == 0.0
    assert_array_equal(support(p), [True, False, False])


@pytest.mark.parametrize("z", [[], [np.nan, 1.0], [np.inf]])
def test_rejects_bad_input(z):
    with pytest.raises(InvalidInputError):
        sparsemax(z)


def test_padding_with_negative_infinity():
    from kinedict import _kernels

    Z = np.array([[0.3, 0.1, -np.inf, -np.inf], [1.0, 0.2, 0.5, -0.4]])
    for f in (_kernels._sparsemax_rows_np, _kernels._sparsemax_rows_loops):
        P = f(Z)
        assert_allclose(P[0], np.r_[sparsemax([0.3, 0.1]), 0.0, 0.0], atol=1e-15)
        assert_allclose(P[1], sparsemax(Z[1]), atol=1e-15)


class TestJacobian:
    def test_examples(self):
        assert_allclose(sparsemax_jacobian([0.1, 0.2]), [[0.5, -0.5], [-0.5, 0.5]])
        assert_array_equal(sparsemax_jacobian([2.0, 0.0]), np.zeros((2, 2)))

    def test_finite_differences(self, rng):
        h = 1e-6
        checked = 0
        while checked < 50:
            z = rng.normal(size=8)
            S = sparsemax(z) > 0
            # skip points whose support changes under the probe
            stable = all(np.array_equal(sparsemax(z + s * h * e) > 0, S) for e in np.eye(8) for s in (-1, 1))
            if not stable:
                continue
            J = sparsemax_jacobian(z)
            Jfd = np.stack([(sparsemax(z + h * e) - sparsemax(z - h * e)) / (2 * h) for e in np.eye(8)], axis=1)
            assert np.linalg.norm(J - Jfd) <= 1e-5 * max(np.linalg.norm(J), 1.0)
            checked += 1

    def test_vjp_matches_matrix(self, rng):
        for _ in range(20):
            z = rng.normal(size=6)
            g = rng.normal(size=6)
            assert_allclose(sparsemax_vjp(sparsemax(z), g), sparsemax_jacobian(z).T @ g, atol=1e-14)

    def test_symmetric_projector(self, rng):
        J = sparsemax_jacobian(rng.normal(size=8))
        assert_allclose(J, J.T)
        assert_allclose(J @ J, J, atol=1e-15)
        assert_allclose(J.sum(axis=1), 0.0, atol=1e-15)


def test_softmax_reference_is_never_sparse(rng):
    # the dense alternative never produces exact zeros; sparsemax does
    z = rng.normal(size=(200, 8)) * 3
    soft = np.exp(z - z.max(axis=1, keepdims=True))
    soft /= soft.sum(axis=1, keepdims=True)
    assert np.all(soft > 0)
    assert np.mean(sparsemax(z) == 0) > 0.5
