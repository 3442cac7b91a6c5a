"""Legendre polynomial chaos for uniform parameters on [-1, 1]^dim."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

_TOL = 1e-12


def _check_range(z: np.ndarray) -> None:
    if z.size and np.max(np.abs(z)) > 1.0 + _TOL:
        raise ValueError("Legendre argument outside [-1, 1]")


def legendre_table(p: int, z) -> np.ndarray:
    """Orthonormal Legendre values ``sqrt(2n+1) P_n(z)`` for n = 0..p.

    Returns an array with a trailing axis of length ``p + 1``. Orthonormal
    with respect to the uniform density 1/2 on [-1, 1].
    """
    if p < 0:
        raise ValueError(f"degree must be >= 0, got {p}")
    z = np.asarray(z, dtype=float)
    _check_range(z)
    out = np.empty(z.shape + (p + 1,))
    prev = np.ones_like(z)
    out[..., 0] = prev
    if p >= 1:
        cur = z.copy()
        out[..., 1] = cur
        for n in range(1, p):
            # (n+1) P_{n+1} = (2n+1) z P_n - n P_{n-1}
            prev, cur = cur, ((2 * n + 1) * z * cur - n * prev) / (n + 1)
            out[..., n + 1] = cur
    out *= np.sqrt(2 * np.arange(p + 1) + 1.0)
    return out


def legendre_orthonormal(n: int, z):
    """``sqrt(2n+1) P_n(z)`` via the three-term recurrence."""
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    values = legendre_table(n, z)[..., n]
    return values if values.ndim else float(values)


def total_degree_indices(dim: int, p: int) -> np.ndarray:
    """Multi-indices with ``|alpha|_1 <= p`` in graded lexicographic order.

    Within one total degree, indices are sorted with the first coordinate
    varying slowest and largest first, e.g. (1,0) before (0,1).
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if p < 0:
        raise ValueError(f"degree must be >= 0, got {p}")
    found = [a for a in itertools.product(range(p + 1), repeat=dim) if sum(a) <= p]
    found.sort(key=lambda a: (sum(a), tuple(-c for c in a)))
    return np.array(found, dtype=int).reshape(-1, dim)


@dataclass(frozen=True)
class ChaosBasis:
    dim: int
    max_total_degree: int
    multi_indices: np.ndarray

    @property
    def cardinality(self) -> int:
        return len(self.multi_indices)

    def evaluate(self, xi_hat) -> np.ndarray:
        """Basis values at standardized samples; shape ``(..., K)``."""
        return eval_basis(self, xi_hat)


def build_basis(dim: int, p: int) -> ChaosBasis:
    idx = total_degree_indices(dim, p)
    assert len(idx) == comb(dim + p, p)
    return ChaosBasis(dim, p, idx)


def eval_basis(basis: ChaosBasis, xi_hat) -> np.ndarray:
    xi_hat = np.asarray(xi_hat, dtype=float)
    if xi_hat.shape[-1] != basis.dim:
        raise ValueError(f"expected {basis.dim} coordinates, got {xi_hat.shape[-1]}")
    table = legendre_table(basis.max_total_degree, xi_hat)  # (..., dim, p+1)
    out = np.ones(xi_hat.shape[:-1] + (basis.cardinality,))
    for i in range(basis.dim):
        out *= table[..., i, :][..., basis.multi_indices[:, i]]
    return out


def _tensor_quadrature(dim: int, points: int):
    nodes, weights = np.polynomial.legendre.leggauss(points)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([weights / 2.0] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    return pts, np.prod([w.ravel() for w in wgrids], axis=0)


def gauss_legendre_gram(basis: ChaosBasis, points: int = 32) -> np.ndarray:
    """Gram matrix under the uniform law via tensorized Gauss-Legendre quadrature."""
    pts, w = _tensor_quadrature(basis.dim, points)
    phi = eval_basis(basis, pts)
    return phi.T @ (phi * w[:, None])


def project(basis: ChaosBasis, fn, points: int = 32) -> np.ndarray:
    """Chaos coefficients of ``fn(xi_hat)`` by quadrature projection."""
    pts, w = _tensor_quadrature(basis.dim, points)
    phi = eval_basis(basis, pts)
    return phi.T @ (np.asarray(fn(pts), dtype=float) * w)
