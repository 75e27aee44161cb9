"""Per-element nonconforming virtual space machinery.

A scalar virtual function on a cell is known only through its degrees of
freedom: k moments of its trace against the scaled edge monomials on every
edge (normalized by 1/|e|), plus its moments against the degree-(k-2) cell
monomials (normalized by 1/|E|).  Everything the solver needs is assembled
from these DOFs alone:

  * the energy projector onto P_k, via integration by parts
      (grad v, grad m_a)_E = -(v, Lap m_a)_E + sum_e (v, dn m_a)_e,
    where Lap m_a lives in P_{k-2} and dn m_a in P_{k-1}(e), both reachable
    through DOFs; the constant mode is pinned by matching the boundary mean;
  * a dofi-dofi stabilization vanishing on polynomial DOF vectors;
  * the divergence pairing against P_{k-1} pressures, which is exact because
      (q, div v)_E = sum_e (q, v.n)_e - (grad q, v)_E
    only needs edge traces of degree <= k-1 and cell moments of degree <= k-2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidValue, SingularProjectorSystem
from .monomials import (
    EdgeMonomialBasis,
    ScaledMonomialBasis,
    dim_Pk,
    edge_gram,
    gram_grad,
    gram_l2,
)
from .quadrature import edge_quadrature, polygon_quadrature

log = logging.getLogger(__name__)

# Default quadrature order for degree-k data: covers every product of two
# local polynomials with margin.
def _default_order(k: int) -> int:
    return 2 * k + 2


# Non-polynomial data (interpolation targets, loads) gets at least this
# order so moment errors stay near machine precision at desk scale.
_DATA_ORDER = 12

_CONDITION_WARN = 1e12


class DofLayout:
    """Scalar/vector DOF layout of one cell.

    Scalar ordering: edge moments first (local edge major, moment degree
    minor), then interior moments in basis order.  Vector fields stack the
    two components: [all x DOFs, all y DOFs].
    """

    def __init__(self, n_edges: int, k: int):
        if k < 1:
            raise InvalidValue("polynomial degree k must be >= 1")
        self.k = k
        self.n_edges = n_edges
        self.n_edge_dofs = n_edges * k
        self.n_cell_dofs = dim_Pk(k - 2)
        self.n_scalar = self.n_edge_dofs + self.n_cell_dofs
        self.n_velocity = 2 * self.n_scalar
        self.n_pressure = dim_Pk(k - 1)

    def edge_dof(self, local_edge: int, moment: int) -> int:
        return local_edge * self.k + moment

    def cell_dof(self, moment: int) -> int:
        return self.n_edge_dofs + moment


@dataclass
class VirtualFunctionDofs:
    """DOF values of a scalar (n_scalar) or 2-vector (2*n_scalar) function."""

    layout: DofLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] not in (self.layout.n_scalar, self.layout.n_velocity):
            raise InvalidValue(
                f"DOF vector length {self.values.shape[0]} does not match layout")
        if not np.all(np.isfinite(self.values)):
            raise InvalidValue("non-finite DOF values")


class _EdgeData:
    """Canonical-frame quadrature and basis data of one local edge."""

    def __init__(self, mesh, cell: int, local_edge: int, k: int, order: int):
        ei, _sign = mesh.cell_edges[cell][local_edge]
        self.index = ei
        p_lo, p_hi = mesh.edge_endpoints(ei)
        self.rule = edge_quadrature(p_lo, p_hi, order)
        self.length = float(np.hypot(*(p_hi - p_lo)))
        self.basis = EdgeMonomialBasis(self.length, k)
        self.mu = self.basis.values(self.rule.points)      # (nq, k)
        self.gram = edge_gram(self.basis, self.rule)       # (k, k)
        # Outward normal comes from the cell loop; quadrature stays in the
        # canonical lo -> hi frame shared with the neighbor.
        self.normal = mesh.geometry[cell].edge_normals[local_edge]


class LocalVemElement:
    """All local matrices of one cell: projector, stabilization, stiffness,
    divergence, and load assembly, computed from DOFs only."""

    def __init__(self, mesh, cell: int, k: int, nu: float = 1.0):
        self.mesh = mesh
        self.cell = cell
        self.k = int(k)
        self.nu = float(nu)
        self.geometry = mesh.geometry[cell]
        loop = mesh.cells[cell]
        self.layout = DofLayout(len(loop), self.k)
        self.basis = ScaledMonomialBasis.from_cell(mesh, cell, self.k)
        self.pressure_basis = ScaledMonomialBasis.from_cell(mesh, cell, self.k - 1)

        order = _default_order(self.k)
        self.rule = polygon_quadrature(mesh.cell_vertices(cell), order)
        self.edges = [_EdgeData(mesh, cell, le, self.k, order)
                      for le in range(len(loop))]

        self._vals = self.basis.values(self.rule.points)          # (nq, nP)
        self.gram = gram_l2(self.basis, self.rule)                # (nP, nP)
        self.gram_gradient = gram_grad(self.basis, self.rule)     # (nP, nP)

        self.dof_matrix = self._build_dof_matrix()
        self.projector = self._build_projector()
        self.stabilization = self._build_stabilization()
        self.stiffness_scalar = self._build_stiffness_scalar()
        self.divergence = self._build_divergence()

    # -- DOF functionals applied to polynomials ---------------------------

    def _build_dof_matrix(self) -> np.ndarray:
        """D[i, a] = (i-th DOF functional) applied to m_a."""
        lay = self.layout
        nP = len(self.basis)
        D = np.zeros((lay.n_scalar, nP))
        for le, ed in enumerate(self.edges):
            pvals = self.basis.values(ed.rule.xy)                  # (nq, nP)
            mom = ed.mu.T @ (ed.rule.weights[:, None] * pvals)     # (k, nP)
            D[le * self.k:(le + 1) * self.k, :] = mom / ed.length
        n2 = lay.n_cell_dofs
        if n2:
            w = self.rule.weights[:, None]
            mom = self._vals[:, :n2].T @ (w * self._vals)          # (n2, nP)
            D[lay.n_edge_dofs:, :] = mom / self.geometry.area
        return D

    # -- energy projector --------------------------------------------------

    def _build_projector(self) -> np.ndarray:
        """Pi (nP x n_scalar): DOF vector -> P_k coefficients."""
        lay = self.layout
        nP = len(self.basis)
        R = np.zeros((nP, lay.n_scalar))

        # Edge part: expand dn m_a on each edge over the edge monomials; the
        # expansion is exact since dn m_a has trace degree <= k-1.
        for le, ed in enumerate(self.edges):
            grads = self.basis.gradients(ed.rule.xy)               # (nq, nP, 2)
            dn = grads[:, :, 0] * ed.normal[0] + grads[:, :, 1] * ed.normal[1]
            rhs = ed.mu.T @ (ed.rule.weights[:, None] * dn)        # (k, nP)
            coef = np.linalg.solve(ed.gram, rhs)                   # (k, nP)
            R[:, le * self.k:(le + 1) * self.k] += ed.length * coef.T

        # Interior part: -(v, Lap m_a) through the cell moments.
        n2 = lay.n_cell_dofs
        if n2:
            lap = self.basis.laplacian_matrix()                    # (n2, nP)
            R[:, lay.n_edge_dofs:] -= self.geometry.area * lap.T

        # Pin the constant by matching the boundary mean, which is a plain
        # combination of the zeroth edge moments.
        G = self.gram_gradient.copy()
        boundary_row = np.zeros(nP)
        for ed in self.edges:
            boundary_row += self._vals_on_edge_integral(ed)
        G[0, :] = boundary_row
        r0 = np.zeros(lay.n_scalar)
        for le, ed in enumerate(self.edges):
            r0[le * self.k] = ed.length
        R[0, :] = r0

        cond = np.linalg.cond(G)
        if not np.isfinite(cond):
            raise SingularProjectorSystem(
                f"projector system singular on cell {self.cell}")
        if cond > _CONDITION_WARN:
            log.warning("cell %d projector system condition %.2e",
                        self.cell, cond)
        try:
            return np.linalg.solve(G, R)
        except np.linalg.LinAlgError as exc:
            raise SingularProjectorSystem(
                f"projector system singular on cell {self.cell}") from exc

    def _vals_on_edge_integral(self, ed: _EdgeData) -> np.ndarray:
        pvals = self.basis.values(ed.rule.xy)
        return ed.rule.weights @ pvals

    # -- stabilization and stiffness ---------------------------------------

    def _build_stabilization(self) -> np.ndarray:
        """nu * (I - D Pi)^T (I - D Pi): PSD, zero exactly on P_k DOF vectors.

        DOFs are dimensionless by construction, so the identity weight
        already scales like the H1 seminorm.
        """
        n = self.layout.n_scalar
        M = np.eye(n) - self.dof_matrix @ self.projector
        S = self.nu * (M.T @ M)
        return 0.5 * (S + S.T)

    def _build_stiffness_scalar(self) -> np.ndarray:
        A = self.nu * (self.projector.T @ self.gram_gradient @ self.projector)
        A = A + self.stabilization
        return 0.5 * (A + A.T)

    @property
    def stiffness(self) -> np.ndarray:
        """Velocity stiffness: block-diagonal over the two components."""
        n = self.layout.n_scalar
        A = np.zeros((2 * n, 2 * n))
        A[:n, :n] = self.stiffness_scalar
        A[n:, n:] = self.stiffness_scalar
        return A

    # -- divergence ---------------------------------------------------------

    def _build_divergence(self) -> np.ndarray:
        """B[q, dof]: (m^p_q, div v)_E assembled exactly from DOFs."""
        lay = self.layout
        nQ = lay.n_pressure
        B = np.zeros((nQ, lay.n_velocity))
        for le, ed in enumerate(self.edges):
            qvals = self.pressure_basis.values(ed.rule.xy)         # (nq, nQ)
            rhs = ed.mu.T @ (ed.rule.weights[:, None] * qvals)     # (k, nQ)
            trace = np.linalg.solve(ed.gram, rhs)                  # (k, nQ)
            cols = slice(le * self.k, (le + 1) * self.k)
            B[:, cols] += ed.length * ed.normal[0] * trace.T
            start = lay.n_scalar + le * self.k
            B[:, start:start + self.k] += ed.length * ed.normal[1] * trace.T
        n2 = lay.n_cell_dofs
        if n2:
            gx = self.pressure_basis.derivative_matrix(0)          # (n2, nQ)
            gy = self.pressure_basis.derivative_matrix(1)
            area = self.geometry.area
            B[:, lay.n_edge_dofs:lay.n_scalar] -= area * gx.T
            B[:, lay.n_scalar + lay.n_edge_dofs:] -= area * gy.T
        return B

    # -- load ----------------------------------------------------------------

    def load_vector(self, f, mode: str = "split") -> np.ndarray:
        """Right-hand side contributions of a 2-vector source f.

        Modes:
          * "projector": (f, Pi v)_E for every DOF basis function v.
          * "moments":   (P0_{k-2} f, v)_E, reachable through interior
                         moments; only defined for k >= 2.
          * "split":     (P0_{k-2} f, v)_E + (f - P0_{k-2} f, Pi v)_E.
                         Coincides with "projector" for k = 1 and integrates
                         polynomial sources of degree <= k-2 exactly.
        """
        lay = self.layout
        fv = np.asarray(f(self.rule.points), dtype=float)
        fv = fv.reshape(len(self.rule.weights), 2)
        moments = self._vals.T @ (self.rule.weights[:, None] * fv)  # (nP, 2)

        n2 = lay.n_cell_dofs
        out = np.zeros(lay.n_velocity)
        if mode == "projector":
            L = self.projector.T @ moments                          # (n_scalar, 2)
            out[:lay.n_scalar] = L[:, 0]
            out[lay.n_scalar:] = L[:, 1]
            return out
        if mode == "moments":
            if n2 == 0:
                raise InvalidValue("load mode 'moments' needs k >= 2")
            coef = np.linalg.solve(self.gram[:n2, :n2], moments[:n2])
            area = self.geometry.area
            out[lay.n_edge_dofs:lay.n_scalar] = area * coef[:, 0]
            out[lay.n_scalar + lay.n_edge_dofs:] = area * coef[:, 1]
            return out
        if mode == "split":
            if n2:
                coef = np.linalg.solve(self.gram[:n2, :n2], moments[:n2])
                remainder = moments - self.gram[:, :n2] @ coef
            else:
                coef = np.zeros((0, 2))
                remainder = moments
            L = self.projector.T @ remainder
            out[:lay.n_scalar] = L[:, 0]
            out[lay.n_scalar:] = L[:, 1]
            if n2:
                area = self.geometry.area
                out[lay.n_edge_dofs:lay.n_scalar] += area * coef[:, 0]
                out[lay.n_scalar + lay.n_edge_dofs:] += area * coef[:, 1]
            return out
        raise InvalidValue(f"unknown load mode {mode!r}")

    # -- helpers --------------------------------------------------------------

    def project_scalar_dofs(self, dofs: np.ndarray) -> np.ndarray:
        """P_k coefficients of the energy projection of a scalar DOF vector."""
        return self.projector @ np.asarray(dofs, dtype=float)

    def pressure_mass(self) -> np.ndarray:
        """L2 Gram of the pressure basis on this cell."""
        nQ = self.layout.n_pressure
        rule_vals = self.pressure_basis.values(self.rule.points)
        M = rule_vals.T @ (self.rule.weights[:, None] * rule_vals)
        return 0.5 * (M + M.T)

    def pressure_integrals(self) -> np.ndarray:
        """Integrals of the pressure basis functions over the cell."""
        rule_vals = self.pressure_basis.values(self.rule.points)
        return self.rule.weights @ rule_vals


# --- free-function forms of the local operations --------------------------

def dof_interpolate(mesh, cell: int, k: int, f, order: int | None = None) -> VirtualFunctionDofs:
    """DOF vector of a scalar or 2-vector function on one cell.

    Edge DOFs are (1/|e|) (f, mu_j)_e, interior DOFs (1/|E|) (f, m_b)_E.
    The quadrature order defaults high enough that smooth non-polynomial
    data is resolved to near machine precision.
    """
    k = int(k)
    loop = mesh.cells[cell]
    lay = DofLayout(len(loop), k)
    order = max(_default_order(k), _DATA_ORDER) if order is None else order

    sample = np.asarray(f(mesh.geometry[cell].centroid[None, :]), dtype=float)
    n_comp = sample.reshape(-1).shape[0]
    if n_comp not in (1, 2):
        raise InvalidValue("interpolation target must be scalar or 2-vector")

    def evaluate(points, n):
        return np.asarray(f(points), dtype=float).reshape(n, n_comp)

    out = np.zeros(lay.n_scalar * n_comp)
    for le in range(len(loop)):
        ed = _EdgeData(mesh, cell, le, k, order)
        fv = evaluate(ed.rule.xy, len(ed.rule.weights))
        mom = ed.mu.T @ (ed.rule.weights[:, None] * fv) / ed.length  # (k, nc)
        for comp in range(n_comp):
            base = comp * lay.n_scalar
            out[base + le * k: base + (le + 1) * k] = mom[:, comp]
    if lay.n_cell_dofs:
        rule = polygon_quadrature(mesh.cell_vertices(cell), order)
        basis = ScaledMonomialBasis.from_cell(mesh, cell, k - 2)
        vals = basis.values(rule.points)
        fv = evaluate(rule.points, len(rule.weights))
        area = mesh.geometry[cell].area
        mom = vals.T @ (rule.weights[:, None] * fv) / area           # (n2, nc)
        for comp in range(n_comp):
            base = comp * lay.n_scalar
            out[base + lay.n_edge_dofs: base + lay.n_scalar] = mom[:, comp]
    return VirtualFunctionDofs(layout=lay, values=out)


def build_energy_projector(mesh, cell: int, k: int) -> np.ndarray:
    return LocalVemElement(mesh, cell, k).projector


def build_stabilization(mesh, cell: int, k: int, nu: float = 1.0) -> np.ndarray:
    return LocalVemElement(mesh, cell, k, nu=nu).stabilization


def local_stiffness(mesh, cell: int, k: int, nu: float = 1.0) -> np.ndarray:
    return LocalVemElement(mesh, cell, k, nu=nu).stiffness


def local_divergence(mesh, cell: int, k: int) -> np.ndarray:
    return LocalVemElement(mesh, cell, k).divergence


def local_load(mesh, cell: int, k: int, f, mode: str = "split") -> np.ndarray:
    return LocalVemElement(mesh, cell, k).load_vector(f, mode=mode)
