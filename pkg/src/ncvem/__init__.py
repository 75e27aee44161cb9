"""Nonconforming virtual element solver for the steady Stokes problem.

Velocity components live in a nonconforming virtual space on general
polygonal meshes (edge-moment and interior-moment degrees of freedom only);
the pressure is discontinuous piecewise polynomial one degree lower.  The
package covers meshing, the local element machinery, global saddle-point
assembly, sparse solves, and a verification harness (patch tests,
manufactured-solution convergence studies, numerical inf-sup estimates).
"""

from .mesh import (
    PolyMesh,
    CellGeometry,
    build_mesh,
    gen_quad_grid,
    gen_voronoi_polygonal,
    gen_distorted_quads,
    read_mesh_json,
    write_mesh_json,
    write_mesh_vtk,
)
from .quadrature import QuadratureRule, polygon_quadrature, edge_quadrature
from .monomials import (
    ScaledMonomialBasis,
    EdgeMonomialBasis,
    dim_Pk,
    eval_basis,
    laplacian_coeffs,
    gram_l2,
    gram_grad,
    project_l2,
)
from .element import (
    DofLayout,
    VirtualFunctionDofs,
    LocalVemElement,
    dof_interpolate,
    build_energy_projector,
    build_stabilization,
    local_stiffness,
    local_divergence,
    local_load,
)
from .assembly import (
    GlobalDofMap,
    SaddleSystem,
    DiscreteSolution,
    number_dofs,
    assemble,
    solve_stokes,
)
from .linsolve import (
    SparseMatrixCSR,
    SolverConfig,
    csr_from_triplets,
    matvec,
    solve_symmetric_indefinite,
    min_singular_value_dense,
)
from .verify import (
    ManufacturedCase,
    ConvergenceReport,
    builtin_cases,
    get_case,
    error_norms,
    convergence_study,
    estimate_infsup,
)

__version__ = "0.1.0"
