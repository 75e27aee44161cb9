"""Global DOF numbering, Dirichlet imposition and saddle-point assembly.

Velocity DOFs are numbered component-major (all x, then all y); within a
component edge moments come first (edge-index major), then the per-cell
interior moments.  Interior edges contribute one shared set of moment DOFs:
the canonical edge frame makes the two neighbors' functionals identical, so
no sign tables are needed.  The zero-mean pressure constraint enters as one
Lagrange multiplier row/column, keeping the system symmetric.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .element import LocalVemElement
from .errors import InconsistentBoundaryData
from .linsolve import (
    SolverConfig,
    SparseMatrixCSR,
    csr_from_triplets,
    matvec,
    solve_symmetric_indefinite,
    write_matrix_market,
)
from .monomials import EdgeMonomialBasis, dim_Pk
from .quadrature import edge_quadrature


def worker_count() -> int:
    """Thread cap from NCVEM_THREADS (0 or unset-invalid = auto)."""
    raw = os.environ.get("NCVEM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    if n == 0:
        return min(os.cpu_count() or 1, 8)
    return max(n, 1)


class GlobalDofMap:
    """Deterministic global numbering for velocity and pressure DOFs."""

    def __init__(self, mesh, k: int):
        self.mesh = mesh
        self.k = int(k)
        self.n_cell_moments = dim_Pk(k - 2)
        self.n_scalar = k * mesh.n_edges + self.n_cell_moments * mesh.n_cells
        self.N_u = 2 * self.n_scalar
        self.n_pressure_local = dim_Pk(k - 1)
        self.N_p = mesh.n_cells * self.n_pressure_local

        self._cell_base = k * mesh.n_edges
        bset = []
        for e in sorted(mesh.boundary_edges):
            for j in range(k):
                s = e * k + j
                bset.extend((s, self.n_scalar + s))
        self.boundary_dofs = np.array(sorted(bset), dtype=np.int64)

    def scalar_edge_dof(self, edge: int, moment: int) -> int:
        return edge * self.k + moment

    def scalar_cell_dof(self, cell: int, moment: int) -> int:
        return self._cell_base + cell * self.n_cell_moments + moment

    def cell_velocity_dofs(self, cell: int) -> np.ndarray:
        """Global indices matching LocalVemElement's local vector layout."""
        k = self.k
        scalar = []
        for ei, _sign in self.mesh.cell_edges[cell]:
            scalar.extend(ei * k + j for j in range(k))
        base = self._cell_base + cell * self.n_cell_moments
        scalar.extend(base + j for j in range(self.n_cell_moments))
        scalar = np.array(scalar, dtype=np.int64)
        return np.concatenate([scalar, self.n_scalar + scalar])

    def cell_pressure_dofs(self, cell: int) -> np.ndarray:
        base = cell * self.n_pressure_local
        return np.arange(base, base + self.n_pressure_local, dtype=np.int64)


def number_dofs(mesh, k: int) -> GlobalDofMap:
    return GlobalDofMap(mesh, k)


@dataclass
class SaddleSystem:
    """Assembled symmetric block system over free velocity DOFs, pressure
    coefficients, and the mean-pressure multiplier."""

    K: SparseMatrixCSR
    rhs: np.ndarray
    dof_map: GlobalDofMap
    free: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray      # full-length, zero off boundary
    c: np.ndarray                    # pressure-mean column
    B_full: SparseMatrixCSR          # divergence on all velocity DOFs
    A_free: SparseMatrixCSR
    B_free: SparseMatrixCSR
    precond_diag: np.ndarray = field(repr=False, default=None)
    precond_apply: object = field(repr=False, default=None)
    elements: list = field(repr=False, default=None)
    nu: float = 1.0
    k: int = 1

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def size(self) -> int:
        return self.K.shape[0]

    def write_matrix_market(self, path) -> None:
        write_matrix_market(self.K, path)


@dataclass
class DiscreteSolution:
    """Velocity DOF vector, per-cell pressure coefficients (physical sign),
    multiplier and solver residual."""

    velocity: np.ndarray
    pressure: np.ndarray             # (n_cells, n_pressure_local)
    multiplier: float
    residual: float
    dof_map: GlobalDofMap

    def pressure_mean_constraint(self, c: np.ndarray) -> float:
        """Value of sum_E int_E p_h (should vanish)."""
        return float(c @ self.pressure.ravel())


def _boundary_moment_values(mesh, k: int, g, dof_map: GlobalDofMap) -> np.ndarray:
    """Edge moments of the Dirichlet datum on every boundary edge."""
    values = np.zeros(dof_map.N_u)
    order = max(2 * k + 2, 12)
    for e in sorted(mesh.boundary_edges):
        p0, p1 = mesh.edge_endpoints(e)
        rule = edge_quadrature(p0, p1, order)
        try:
            gv = np.asarray(g(rule.xy), dtype=float).reshape(len(rule.weights), 2)
        except Exception as exc:
            raise InconsistentBoundaryData(
                f"boundary data not evaluable on edge {e}") from exc
        if not np.all(np.isfinite(gv)):
            raise InconsistentBoundaryData(
                f"boundary data non-finite on edge {e}")
        length = float(np.hypot(*(p1 - p0)))
        mu = EdgeMonomialBasis(length, k).values(rule.points)
        mom = mu.T @ (rule.weights[:, None] * gv) / length    # (k, 2)
        for j in range(k):
            s = dof_map.scalar_edge_dof(e, j)
            values[s] = mom[j, 0]
            values[dof_map.n_scalar + s] = mom[j, 1]
    return values


def assemble(mesh, k: int, nu: float, f, g, load_mode: str = "split",
             keep_elements: bool = False) -> SaddleSystem:
    """Assemble the Stokes saddle system with Dirichlet data g and source f.

    Boundary edge-moment DOFs are fixed to the moments of g and their
    columns moved to the right-hand side; the elimination is symmetric.
    With keep_elements the per-cell LocalVemElement objects are retained on
    the returned system (error norms reuse their projectors).
    """
    dof_map = GlobalDofMap(mesh, k)
    n_scalar = dof_map.N_u // 2

    boundary = dof_map.boundary_dofs
    free_mask = np.ones(dof_map.N_u, dtype=bool)
    free_mask[boundary] = False
    free = np.nonzero(free_mask)[0]
    reduced = -np.ones(dof_map.N_u, dtype=np.int64)
    reduced[free] = np.arange(len(free))

    u_bd = _boundary_moment_values(mesh, k, g, dof_map) if len(boundary) else \
        np.zeros(dof_map.N_u)
    u_bd[free] = 0.0

    n_free = len(free)
    N_p = dof_map.N_p
    lam = n_free + N_p                      # multiplier row/col
    size = n_free + N_p + 1

    a_trip = ([], [], [])                   # A on free DOFs (diagnostics)
    bf_trip = ([], [], [])                  # B on free DOFs
    b_trip = ([], [], [])                   # B on all velocity DOFs
    rhs = np.zeros(size)
    c = np.zeros(N_p)
    mp_diag = np.zeros(N_p)

    def build_element(ci):
        elem = LocalVemElement(mesh, ci, k, nu=nu)
        return (elem.stiffness, elem.divergence, elem.load_vector(f, mode=load_mode),
                elem.pressure_integrals(), np.diag(elem.pressure_mass()))

    n_workers = worker_count()
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(build_element, range(mesh.n_cells)))
    else:
        results = [build_element(ci) for ci in range(mesh.n_cells)]

    def push(trip, r, cc, v):
        trip[0].append(r)
        trip[1].append(cc)
        trip[2].append(v)

    for ci, (A_E, B_E, L_E, c_E, m_E) in enumerate(results):
        gdofs = dof_map.cell_velocity_dofs(ci)
        pdofs = dof_map.cell_pressure_dofs(ci)
        rfree = reduced[gdofs]
        free_loc = np.nonzero(rfree >= 0)[0]
        fixed_loc = np.nonzero(rfree < 0)[0]
        rloc = rfree[free_loc]

        np.add.at(rhs, rloc, L_E[free_loc])
        if len(fixed_loc):
            ubd_loc = u_bd[gdofs[fixed_loc]]
            np.add.at(rhs, rloc, -(A_E[np.ix_(free_loc, fixed_loc)] @ ubd_loc))
            np.add.at(rhs, n_free + pdofs, -(B_E[:, fixed_loc] @ ubd_loc))

        Aff = A_E[np.ix_(free_loc, free_loc)]
        I = np.broadcast_to(rloc[:, None], Aff.shape)
        J = np.broadcast_to(rloc[None, :], Aff.shape)
        nz = Aff != 0.0
        push(a_trip, I[nz], J[nz], Aff[nz])

        Bf = B_E[:, free_loc]
        PI = np.broadcast_to((n_free + pdofs)[:, None], Bf.shape)
        VJ = np.broadcast_to(rloc[None, :], Bf.shape)
        nzb = Bf != 0.0
        push(bf_trip, PI[nzb] - n_free, VJ[nzb], Bf[nzb])

        nzf = B_E != 0.0
        PA = np.broadcast_to(pdofs[:, None], B_E.shape)
        GA = np.broadcast_to(gdofs[None, :], B_E.shape)
        push(b_trip, PA[nzf], GA[nzf], B_E[nzf])

        c[pdofs] += c_E
        mp_diag[pdofs] += m_E

    # final system: A block, B and B^T written as symmetric pairs, then the
    # mean-pressure multiplier column/row
    rows, cols, vals = [], [], []
    rows += a_trip[0]; cols += a_trip[1]; vals += a_trip[2]
    rows += [v + n_free for v in bf_trip[0]]; cols += bf_trip[1]; vals += bf_trip[2]
    rows += bf_trip[1]; cols += [v + n_free for v in bf_trip[0]]; vals += bf_trip[2]
    pnz = np.nonzero(c != 0.0)[0]
    rows.append(pnz + n_free); cols.append(np.full(len(pnz), lam)); vals.append(c[pnz])
    rows.append(np.full(len(pnz), lam)); cols.append(pnz + n_free); vals.append(c[pnz])

    def cat(parts, dtype=None):
        if not parts:
            return np.zeros(0, dtype=dtype or np.int64)
        return np.concatenate(parts)

    K = csr_from_triplets(size, size, cat(rows), cat(cols), cat(vals, float))
    A_free = csr_from_triplets(n_free, n_free, cat(a_trip[0]), cat(a_trip[1]),
                               cat(a_trip[2], float))
    B_free = csr_from_triplets(N_p, n_free, cat(bf_trip[0]), cat(bf_trip[1]),
                               cat(bf_trip[2], float))
    B_full = csr_from_triplets(N_p, dof_map.N_u, cat(b_trip[0]), cat(b_trip[1]),
                               cat(b_trip[2], float))

    # diagonal preconditioner hint: |diag A|, pressure mass, domain area
    pre = np.ones(size)
    pre[:n_free] = np.abs(A_free.diagonal())
    pre[n_free:n_free + N_p] = mp_diag
    pre[lam] = mesh.domain_area
    pre[pre <= 0.0] = 1.0

    return SaddleSystem(K=K, rhs=rhs, dof_map=dof_map, free=free,
                        boundary=boundary, boundary_values=u_bd, c=c,
                        B_full=B_full, A_free=A_free, B_free=B_free,
                        precond_diag=pre, nu=nu, k=k)


def solve_stokes(system: SaddleSystem, config: SolverConfig | None = None) -> DiscreteSolution:
    """Solve the assembled system and repackage the solution fields."""
    config = config or SolverConfig()
    if config.precond_diag is None and system.precond_diag is not None:
        config = SolverConfig(tol=config.tol,
                              direct_threshold=config.direct_threshold,
                              max_iterations=config.max_iterations,
                              method=config.method,
                              precond_diag=system.precond_diag)
    x, residual = solve_symmetric_indefinite(system.K, system.rhs, config)

    n_free = system.n_free
    N_p = system.dof_map.N_p
    velocity = system.boundary_values.copy()
    velocity[system.free] = x[:n_free]
    # The momentum rows carry +B^T against the solved multiplier, i.e. the
    # block system determines the negative of the physical pressure.
    pressure = -x[n_free:n_free + N_p].reshape(
        system.dof_map.mesh.n_cells, system.dof_map.n_pressure_local)
    return DiscreteSolution(velocity=velocity, pressure=pressure,
                            multiplier=float(x[-1]), residual=residual,
                            dof_map=system.dof_map)


def divergence_moments(system: SaddleSystem, solution: DiscreteSolution) -> np.ndarray:
    """Per-pressure-moment values of (q, div u_h); zero for g = 0 problems."""
    return matvec(system.B_full, solution.velocity)
