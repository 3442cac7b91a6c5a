import math

import numpy as np
import pytest

from neural_measures.pce import (
    build_basis,
    eval_basis,
    gauss_legendre_gram,
    legendre_orthonormal,
    project,
    total_degree_indices,
)


def test_degree_zero_is_one():
    for z in (-1.0, -0.3, 0.0, 0.7, 1.0):
        assert legendre_orthonormal(0, z) == 1.0


def test_degree_one_odd_at_zero():
    assert legendre_orthonormal(1, 0.0) == 0.0


def test_phi1_unit_norm_by_quadrature():
    nodes, weights = np.polynomial.legendre.leggauss(32)
    assert np.sum(weights / 2 * legendre_orthonormal(1, nodes) ** 2) == pytest.approx(1.0, abs=1e-14)


def test_endpoint_identity():
    basis = build_basis(1, 6)
    np.testing.assert_allclose(eval_basis(basis, [1.0]), np.sqrt(2 * np.arange(7) + 1), rtol=1e-14)


def test_matches_numpy_legendre():
    z = np.linspace(-1, 1, 41)
    for n in range(8):
        coef = np.zeros(n + 1)
        coef[n] = 1.0
        expected = math.sqrt(2 * n + 1) * np.polynomial.legendre.legval(z, coef)
        np.testing.assert_allclose(legendre_orthonormal(n, z), expected, atol=1e-12)


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        legendre_orthonormal(2, 1.5)
    with pytest.raises(ValueError):
        eval_basis(build_basis(2, 2), [0.0, -1.2])


@pytest.mark.parametrize("dim, p, k", [(2, 5, 21), (1, 0, 1), (4, 5, 126), (3, 2, 10)])
def test_cardinality(dim, p, k):
    assert build_basis(dim, p).cardinality == k == math.comb(dim + p, p)


def test_graded_order():
    idx = total_degree_indices(2, 2).tolist()
    assert idx == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]


def test_first_entry_one_and_odd_zero():
    basis = build_basis(3, 4)
    rng = np.random.default_rng(0)
    assert np.all(eval_basis(basis, rng.uniform(-1, 1, (20, 3)))[:, 0] == 1.0)
    at_zero = eval_basis(basis, np.zeros(3))
    odd = np.any(basis.multi_indices % 2 == 1, axis=1)
    assert np.all(at_zero[odd] == 0.0)


@pytest.mark.parametrize("dim, p", [(1, 6), (2, 5), (2, 6)])
def test_gram_identity(dim, p):
    basis = build_basis(dim, p)
    gram = gauss_legendre_gram(basis)
    assert np.max(np.abs(gram - np.eye(basis.cardinality))) < 1e-10


def test_monte_carlo_gram():
    basis = build_basis(2, 3)
    n = 100_000
    phi = eval_basis(basis, np.random.default_rng(7).uniform(-1, 1, (n, 2)))
    prods = phi[:, :, None] * phi[:, None, :]
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(n)
    dev = np.abs(est - np.eye(basis.cardinality))
    assert np.all(dev <= 3 * se + 1e-15)


def test_projection_reproduces_polynomial():
    basis = build_basis(2, 4)

    def poly(z):
        return 1.5 - z[..., 0] + 2 * z[..., 0] * z[..., 1] ** 2 + 0.3 * z[..., 1] ** 4

    coef = project(basis, poly)
    z = np.random.default_rng(3).uniform(-1, 1, (50, 2))
    assert np.max(np.abs(eval_basis(basis, z) @ coef - poly(z))) < 1e-9
