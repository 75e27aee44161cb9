"""Manufactured solutions, error norms, convergence rates, inf-sup estimates.

Velocity errors are measured against the elementwise energy projection of
the discrete solution (the virtual functions themselves are never evaluated
pointwise); pressures compare polynomial coefficients directly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import sympy as sp

from .assembly import GlobalDofMap, assemble, solve_stokes
from .element import LocalVemElement
from .errors import InvalidValue, SizeLimitExceeded
from .linsolve import SolverConfig, min_singular_value_dense
from .mesh import UNIT_SQUARE, gen_distorted_quads, gen_quad_grid, gen_voronoi_polygonal
from .quadrature import polygon_quadrature

_X, _Y = sp.symbols("x y", real=True)


def _lambdify_vec(exprs):
    funcs = [sp.lambdify((_X, _Y), e, "numpy") for e in exprs]

    def call(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cols = []
        for fn in funcs:
            v = fn(pts[:, 0], pts[:, 1])
            cols.append(np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)))
        return np.column_stack(cols)

    return call


def _lambdify_scalar(expr):
    fn = sp.lambdify((_X, _Y), expr, "numpy")

    def call(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = fn(pts[:, 0], pts[:, 1])
        return np.broadcast_to(np.asarray(v, dtype=float), (len(pts),)).copy()

    return call


@dataclass
class ManufacturedCase:
    """Exact Stokes solution with analytically derived load and gradients."""

    name: str
    nu: float
    u: callable                 # (n,2) velocity
    grad_u: callable            # (n,2,2); [:, i, d] = d u_i / d x_d
    p: callable                 # (n,) zero-mean pressure
    f: callable                 # (n,2) load  -nu*Lap u + grad p
    domain: tuple = UNIT_SQUARE

    @property
    def g(self):
        """Dirichlet datum: the velocity trace."""
        return self.u


def _case_from_sympy(name, nu, u1, u2, p_expr, domain=UNIT_SQUARE) -> ManufacturedCase:
    lap = lambda e: sp.diff(e, _X, 2) + sp.diff(e, _Y, 2)
    f1 = -nu * lap(u1) + sp.diff(p_expr, _X)
    f2 = -nu * lap(u2) + sp.diff(p_expr, _Y)
    grads = [sp.diff(u1, _X), sp.diff(u1, _Y), sp.diff(u2, _X), sp.diff(u2, _Y)]
    grad_flat = _lambdify_vec(grads)

    def grad_u(points):
        g = grad_flat(points)
        return g.reshape(-1, 2, 2)

    return ManufacturedCase(
        name=name, nu=float(nu),
        u=_lambdify_vec([u1, u2]),
        grad_u=grad_u,
        p=_lambdify_scalar(p_expr),
        f=_lambdify_vec([f1, f2]),
        domain=domain,
    )


@lru_cache(maxsize=None)
def _builtin(nu: float):
    cases = []
    for k in range(1, 6):
        # divergence-free by construction: u = curl of a degree-(k+1) stream
        # function; pressure lives in the degree-(k-1) pressure space and has
        # zero mean on the unit square (for k = 1 that forces p = 0).
        psi = (_Y ** (k + 1) - _X ** (k + 1)) / (k + 1)
        u1, u2 = sp.diff(psi, _Y), -sp.diff(psi, _X)
        if k == 1:
            p_expr = sp.Integer(0)
        else:
            p_expr = _X ** (k - 1) + _Y ** (k - 1) - sp.Rational(2, k)
        cases.append(_case_from_sympy(f"poly-{k}", nu, u1, u2, p_expr))

    psi = sp.sin(sp.pi * _X) ** 2 * sp.sin(sp.pi * _Y) ** 2
    u1, u2 = sp.diff(psi, _Y), -sp.diff(psi, _X)
    p_expr = sp.sin(2 * sp.pi * _X) * sp.sin(2 * sp.pi * _Y)
    cases.append(_case_from_sympy("trig", nu, u1, u2, p_expr))
    return tuple(cases)


def builtin_cases(nu: float = 1.0) -> list[ManufacturedCase]:
    """Patch-test cases poly-1..poly-5 plus the smooth 'trig' case."""
    return list(_builtin(float(nu)))


def get_case(name: str, nu: float = 1.0) -> ManufacturedCase:
    for case in _builtin(float(nu)):
        if case.name == name:
            return case
    raise InvalidValue(f"unknown case {name!r}")


# --- error norms -----------------------------------------------------------

def error_norms(mesh, k: int, solution, case: ManufacturedCase):
    """(e1, e0, ep): broken-H1 and L2 velocity errors against the projected
    discrete field, and the L2 pressure error."""
    dof_map = solution.dof_map
    e1_sq = e0_sq = ep_sq = 0.0
    for ci in range(mesh.n_cells):
        elem = LocalVemElement(mesh, ci, k, nu=case.nu)
        rule = polygon_quadrature(mesh.cell_vertices(ci), 2 * k + 4)
        gdofs = dof_map.cell_velocity_dofs(ci)
        local = solution.velocity[gdofs]
        n = elem.layout.n_scalar
        cx = elem.project_scalar_dofs(local[:n])
        cy = elem.project_scalar_dofs(local[n:])

        vals = elem.basis.values(rule.points)          # (nq, nP)
        grads = elem.basis.gradients(rule.points)      # (nq, nP, 2)
        uh = np.column_stack([vals @ cx, vals @ cy])
        guh = np.stack([grads[:, :, 0] @ cx, grads[:, :, 1] @ cx,
                        grads[:, :, 0] @ cy, grads[:, :, 1] @ cy], axis=1)

        uex = case.u(rule.points)
        gex = case.grad_u(rule.points).reshape(-1, 4)
        diff_g = gex - guh
        e1_sq += float(rule.weights @ (diff_g ** 2).sum(axis=1))
        e0_sq += float(rule.weights @ ((uex - uh) ** 2).sum(axis=1))

        ph = elem.pressure_basis.values(rule.points) @ solution.pressure[ci]
        ep_sq += float(rule.weights @ (case.p(rule.points) - ph) ** 2)
    return float(np.sqrt(e1_sq)), float(np.sqrt(e0_sq)), float(np.sqrt(ep_sq))


# --- convergence studies -----------------------------------------------------

@dataclass
class LevelResult:
    level: int
    h: float
    N_u: int
    N_p: int
    e1: float
    e0: float
    ep: float


@dataclass
class ConvergenceReport:
    case: str
    k: int
    family: str
    levels: list = field(default_factory=list)

    def rates(self):
        """Observed rates between consecutive levels (log-ratio in h)."""
        out = [(float("nan"),) * 3]
        for a, b in zip(self.levels, self.levels[1:]):
            r = np.log(a.h / b.h)
            out.append((float(np.log(a.e1 / b.e1) / r) if a.e1 > 0 and b.e1 > 0 else float("nan"),
                        float(np.log(a.e0 / b.e0) / r) if a.e0 > 0 and b.e0 > 0 else float("nan"),
                        float(np.log(a.ep / b.ep) / r) if a.ep > 0 and b.ep > 0 else float("nan")))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("level,h,Nu,Np,e1,e0,ep,rate1,rate0,ratep\n")
        for row, (r1, r0, rp) in zip(self.levels, self.rates()):
            buf.write(f"{row.level},{row.h:.17g},{row.N_u},{row.N_p},"
                      f"{row.e1:.17g},{row.e0:.17g},{row.ep:.17g},"
                      f"{r1:.17g},{r0:.17g},{rp:.17g}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def mesh_sequence(family: str, levels: int, base: int = 8, rng_seed: int = 0):
    """Refinement sequence for the named family.

    quad/distorted refine the grid edge count (base * 2^i); voronoi refines
    the cell count (base^2 * 4^i with Lloyd smoothing).
    """
    meshes = []
    for i in range(levels):
        if family == "quad":
            n = base * 2 ** i
            meshes.append(gen_quad_grid(n, n))
        elif family == "distorted":
            n = base * 2 ** i
            meshes.append(gen_distorted_quads(n, n, 0.3 / n, rng_seed=rng_seed + i))
        elif family == "voronoi":
            n_cells = (base ** 2) * 4 ** i
            meshes.append(gen_voronoi_polygonal(n_cells, lloyd_iters=3,
                                                rng_seed=rng_seed + i))
        else:
            raise InvalidValue(f"unknown mesh family {family!r}")
    return meshes


def convergence_study(case: ManufacturedCase, k: int, mesh_family, levels: int = 3,
                      base: int = 8, rng_seed: int = 0,
                      solver_config: SolverConfig | None = None) -> ConvergenceReport:
    """Solve the case on a refinement sequence and report errors and rates."""
    if isinstance(mesh_family, str):
        meshes = mesh_sequence(mesh_family, levels, base=base, rng_seed=rng_seed)
        family_name = mesh_family
    else:
        meshes = list(mesh_family)
        family_name = "custom"
    report = ConvergenceReport(case=case.name, k=k, family=family_name)
    for lvl, mesh in enumerate(meshes):
        system = assemble(mesh, k, case.nu, case.f, case.g)
        solution = solve_stokes(system, solver_config)
        e1, e0, ep = error_norms(mesh, k, solution, case)
        report.levels.append(LevelResult(level=lvl, h=mesh.h,
                                         N_u=system.dof_map.N_u,
                                         N_p=system.dof_map.N_p,
                                         e1=e1, e0=e0, ep=ep))
    return report


# --- inf-sup estimation --------------------------------------------------------

def estimate_infsup(mesh, k: int, nu: float = 1.0) -> float:
    """Numerical inf-sup constant of the discretization.

    Smallest singular value of Mp^{-1/2} B A0^{-1/2} with the constant
    pressure direction removed; A0 is the velocity stiffness on the
    zero-boundary space and Mp the pressure mass matrix.
    """
    zero_vec = lambda pts: np.zeros((np.atleast_2d(pts).shape[0], 2))
    system = assemble(mesh, k, nu, zero_vec, zero_vec)
    n_total = system.n_free + system.dof_map.N_p
    if n_total > 2000:
        raise SizeLimitExceeded(f"{n_total} DOFs exceeds dense cap 2000")

    A0 = system.A_free.to_dense()
    B0 = system.B_free.to_dense()

    # block-diagonal pressure mass
    N_p = system.dof_map.N_p
    Mp = np.zeros((N_p, N_p))
    for ci in range(mesh.n_cells):
        elem = LocalVemElement(mesh, ci, k, nu=nu)
        pd = system.dof_map.cell_pressure_dofs(ci)
        Mp[np.ix_(pd, pd)] = elem.pressure_mass()

    L = np.linalg.cholesky(A0)
    Lm = np.linalg.cholesky(Mp)
    # S = Lm^{-1} B0 L^{-T}; singular values match Mp^{-1/2} B A0^{-1/2}
    T = scipy.linalg.solve_triangular(L, B0.T, lower=True)        # L^{-1} B0^T
    S = scipy.linalg.solve_triangular(Lm, T.T, lower=True)        # (N_p, n_free)

    # remove the constant-pressure direction (p == 1 pairs only with the
    # boundary flux, which vanishes on the zero-boundary space)
    one = np.zeros(N_p)
    for ci in range(mesh.n_cells):
        one[system.dof_map.cell_pressure_dofs(ci)[0]] = 1.0
    w = Lm.T @ one
    Q = np.linalg.qr(w.reshape(-1, 1), mode="complete")[0][:, 1:]  # complement
    return min_singular_value_dense(Q.T @ S)
