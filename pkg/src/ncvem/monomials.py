"""Scaled monomial bases on cells and edges, their calculus and projections.

Cell bases are m_a((x - x_E)/h_E) ordered graded-lexicographically
(1, x, y, x^2, xy, y^2, ...); the same ordering is used everywhere, and the
degree-(k-1) basis is always the leading slice of the degree-k one.  Edge
bases are 1D monomials in the arclength coordinate, centered at the edge
midpoint and scaled by the edge length, so all moment degrees of freedom are
dimensionless.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureOrderTooLow
from .quadrature import QuadratureRule


def dim_Pk(k: int) -> int:
    """Dimension of the 2D polynomial space of total degree <= k."""
    if k < 0:
        return 0
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(k: int) -> np.ndarray:
    """Exponent pairs (a, b) of x^a y^b, graded lexicographic."""
    idx = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    out = np.array(idx, dtype=np.int64).reshape(-1, 2)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _index_of(k: int):
    return {(int(a), int(b)): i for i, (a, b) in enumerate(multi_indices(k))}


class ScaledMonomialBasis:
    """Basis of P_degree on a cell, scaled by centroid and diameter."""

    def __init__(self, center, diameter: float, degree: int):
        self.center = np.asarray(center, dtype=float)
        self.diameter = float(diameter)
        self.degree = int(degree)
        self.alphas = multi_indices(self.degree)

    @classmethod
    def from_cell(cls, mesh, cell: int, degree: int) -> "ScaledMonomialBasis":
        geo = mesh.geometry[cell]
        return cls(geo.centroid, geo.diameter, degree)

    def __len__(self) -> int:
        return dim_Pk(self.degree)

    def _scaled(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.center) / self.diameter

    def values(self, points) -> np.ndarray:
        """(n_points, n_basis) array of m_a values."""
        z = self._scaled(points)
        powx = np.power(z[:, [0]], np.arange(self.degree + 1)[None, :])
        powy = np.power(z[:, [1]], np.arange(self.degree + 1)[None, :])
        return powx[:, self.alphas[:, 0]] * powy[:, self.alphas[:, 1]]

    def gradients(self, points) -> np.ndarray:
        """(n_points, n_basis, 2) array; carries the 1/h_E chain-rule factor."""
        z = self._scaled(points)
        n = len(z)
        exps = np.arange(self.degree + 1)
        powx = np.power(z[:, [0]], exps[None, :])
        powy = np.power(z[:, [1]], exps[None, :])
        a, b = self.alphas[:, 0], self.alphas[:, 1]
        out = np.zeros((n, len(self), 2))
        ax = a > 0
        out[:, ax, 0] = (a[ax] / self.diameter) * powx[:, a[ax] - 1] * powy[:, b[ax]]
        by = b > 0
        out[:, by, 1] = (b[by] / self.diameter) * powx[:, a[by]] * powy[:, b[by] - 1]
        return out

    def laplacian_coeffs(self, index: int) -> np.ndarray:
        """Coefficients of Laplacian(m_index) over the degree-(degree-2) basis.

        Exact in closed form: d^2/dx^2 of x^a y^b drops (a-2, b) with factor
        a(a-1)/h^2, and symmetrically in y.  Zero vector for |a| <= 1.
        """
        n2 = dim_Pk(self.degree - 2)
        out = np.zeros(n2)
        if n2 == 0:
            return out
        lut = _index_of(self.degree - 2)
        a, b = (int(v) for v in self.alphas[index])
        h2 = self.diameter ** 2
        if a >= 2:
            out[lut[(a - 2, b)]] += a * (a - 1) / h2
        if b >= 2:
            out[lut[(a, b - 2)]] += b * (b - 1) / h2
        return out

    def laplacian_matrix(self) -> np.ndarray:
        """(dim P_{degree-2}, n_basis); column j expands Laplacian(m_j)."""
        cols = [self.laplacian_coeffs(j) for j in range(len(self))]
        return np.column_stack(cols) if cols else np.zeros((0, len(self)))

    def derivative_matrix(self, axis: int) -> np.ndarray:
        """(dim P_{degree-1}, n_basis); column j expands d(m_j)/d(axis)."""
        n1 = dim_Pk(self.degree - 1)
        out = np.zeros((n1, len(self)))
        if n1 == 0:
            return out
        lut = _index_of(self.degree - 1)
        for j, (a, b) in enumerate(self.alphas):
            a, b = int(a), int(b)
            if axis == 0 and a >= 1:
                out[lut[(a - 1, b)], j] = a / self.diameter
            if axis == 1 and b >= 1:
                out[lut[(a, b - 1)], j] = b / self.diameter
        return out


class EdgeMonomialBasis:
    """1D monomials ((s - |e|/2)/|e|)^j, j = 0..count-1, in edge arclength."""

    def __init__(self, length: float, count: int):
        self.length = float(length)
        self.count = int(count)

    def __len__(self) -> int:
        return self.count

    def values(self, s) -> np.ndarray:
        t = (np.asarray(s, dtype=float) - 0.5 * self.length) / self.length
        return np.power(t[:, None], np.arange(self.count)[None, :])


def eval_basis(basis: ScaledMonomialBasis, points):
    """Values and gradients of all basis functions at the given points."""
    return basis.values(points), basis.gradients(points)


def laplacian_coeffs(basis: ScaledMonomialBasis, index: int) -> np.ndarray:
    return basis.laplacian_coeffs(index)


def _require_order(basis: ScaledMonomialBasis, rule: QuadratureRule) -> None:
    if rule.order < 2 * basis.degree:
        raise QuadratureOrderTooLow(
            f"rule order {rule.order} < 2*degree = {2 * basis.degree}")


def gram_l2(basis: ScaledMonomialBasis, rule: QuadratureRule) -> np.ndarray:
    """L2(E) Gram matrix of the basis; symmetric positive definite."""
    _require_order(basis, rule)
    v = basis.values(rule.points)
    g = v.T @ (rule.weights[:, None] * v)
    return 0.5 * (g + g.T)


def gram_grad(basis: ScaledMonomialBasis, rule: QuadratureRule) -> np.ndarray:
    """H1-seminorm Gram matrix; PSD with the constant as its kernel."""
    _require_order(basis, rule)
    g = basis.gradients(rule.points)
    gx, gy = g[:, :, 0], g[:, :, 1]
    out = gx.T @ (rule.weights[:, None] * gx) + gy.T @ (rule.weights[:, None] * gy)
    return 0.5 * (out + out.T)


def project_l2(f, basis: ScaledMonomialBasis, rule: QuadratureRule) -> np.ndarray:
    """Coefficients of the L2(E) projection of f onto the basis."""
    g = gram_l2(basis, rule)
    fv = np.asarray(f(rule.points), dtype=float).reshape(len(rule.weights))
    moments = basis.values(rule.points).T @ (rule.weights * fv)
    return np.linalg.solve(g, moments)


def edge_gram(basis: EdgeMonomialBasis, rule: QuadratureRule) -> np.ndarray:
    """L2(e) Gram matrix of the edge monomials (arclength coordinate)."""
    v = basis.values(rule.points)
    g = v.T @ (rule.weights[:, None] * v)
    return 0.5 * (g + g.T)
