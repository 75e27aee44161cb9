"""Command-line front end: mesh generation, solves, convergence studies,
inf-sup reports.

Exit codes: 0 success (all artifacts written), 1 solver or artifact-write
failure, 2 configuration error.  Flags override config-file values, which
override the documented defaults (k=1, nu=1, tol=1e-10).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import verify
from .assembly import assemble, solve_stokes
from .element import LocalVemElement
from .errors import InvalidValue, NcvemError, UnknownFlag
from .linsolve import SolverConfig
from .mesh import (
    PolyMesh,
    gen_distorted_quads,
    gen_quad_grid,
    gen_voronoi_polygonal,
    read_mesh_json,
    write_mesh_json,
    write_mesh_vtk,
)

_COMMANDS = ("mesh", "solve", "convergence", "infsup")
_DEFAULTS = dict(k=1, nu=1.0, case="trig", mesh="quad:8", mesh_file=None,
                 levels=3, tol=1e-10, direct_threshold=50_000,
                 outdir="out", seed=0)


@dataclass
class RunConfig:
    command: str
    k: int = 1
    nu: float = 1.0
    case: str = "trig"
    mesh: str = "quad:8"
    mesh_file: str | None = None
    levels: int = 3
    tol: float = 1e-10
    direct_threshold: int = 50_000
    outdir: str = "out"
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.command not in _COMMANDS:
            raise InvalidValue(f"unknown command {self.command!r}")
        if not 1 <= self.k <= 5:
            raise InvalidValue("k must be in 1..5")
        if self.nu <= 0:
            raise InvalidValue("nu must be positive")
        if self.levels < 1:
            raise InvalidValue("levels must be >= 1")
        if self.tol <= 0:
            raise InvalidValue("tol must be positive")
        return self


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncvem",
        description="Nonconforming virtual element Stokes solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="JSON config file with flat keys mirroring flags")
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--nu", type=float, default=None)
        p.add_argument("--case", type=str, default=None)
        p.add_argument("--mesh", type=str, default=None,
                       help="family:size, e.g. quad:16, voronoi:64, distorted:8")
        p.add_argument("--mesh-file", type=str, default=None)
        p.add_argument("--levels", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--direct-threshold", type=int, default=None)
        p.add_argument("--outdir", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
    return parser


def parse_config(argv, config_file: str | None = None) -> RunConfig:
    """Resolve CLI flags, optional JSON file, and defaults into a RunConfig."""
    ns = _build_parser().parse_args(argv)
    path = ns.config if ns.config is not None else config_file

    values = dict(_DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise InvalidValue(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidValue(f"config file {path} is not valid JSON") from exc
        known = {f.name for f in fields(RunConfig)} - {"command"}
        for key, val in file_values.items():
            if key not in known:
                raise UnknownFlag(f"unknown config key {key!r}")
            values[key] = val

    for key in values:
        flag = getattr(ns, key.replace("-", "_"), None)
        if flag is not None:
            values[key] = flag

    try:
        cfg = RunConfig(command=ns.command, **values)
    except TypeError as exc:
        raise InvalidValue(str(exc)) from exc
    cfg.k = int(cfg.k)
    cfg.nu = float(cfg.nu)
    cfg.levels = int(cfg.levels)
    cfg.tol = float(cfg.tol)
    return cfg.validate()


def _build_mesh(cfg: RunConfig, level: int = 0) -> PolyMesh:
    if cfg.mesh_file is not None:
        path = Path(cfg.mesh_file)
        if not path.exists():
            raise InvalidValue(f"mesh file not found: {path}")
        return read_mesh_json(path)
    try:
        family, _, size = cfg.mesh.partition(":")
        n = int(size) if size else 8
    except ValueError as exc:
        raise InvalidValue(f"bad mesh spec {cfg.mesh!r}") from exc
    scale = 2 ** level
    if family == "quad":
        return gen_quad_grid(n * scale, n * scale)
    if family == "voronoi":
        return gen_voronoi_polygonal(n * 4 ** level, lloyd_iters=3,
                                     rng_seed=cfg.seed + level)
    if family == "distorted":
        m = n * scale
        return gen_distorted_quads(m, m, 0.3 / m, rng_seed=cfg.seed + level)
    raise InvalidValue(f"unknown mesh family {family!r}")


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(tol=cfg.tol, direct_threshold=cfg.direct_threshold)


def _write_solution_vtk(mesh, k, solution, path) -> None:
    """Projected velocity sampled at cell vertices (per-cell polynomials),
    cell-mean pressure."""
    n = mesh.n_vertices
    vel = np.zeros((n, 2))
    counts = np.zeros(n)
    pmean = np.zeros(mesh.n_cells)
    for ci in range(mesh.n_cells):
        elem = LocalVemElement(mesh, ci, k)
        gd = solution.dof_map.cell_velocity_dofs(ci)
        local = solution.velocity[gd]
        ns = elem.layout.n_scalar
        cx = elem.project_scalar_dofs(local[:ns])
        cy = elem.project_scalar_dofs(local[ns:])
        pts = mesh.cell_vertices(ci)
        vals = elem.basis.values(pts)
        vel[mesh.cells[ci], 0] += vals @ cx
        vel[mesh.cells[ci], 1] += vals @ cy
        counts[mesh.cells[ci]] += 1.0
        ivals = elem.pressure_integrals()
        pmean[ci] = float(ivals @ solution.pressure[ci]) / mesh.geometry[ci].area
    vel /= counts[:, None]
    write_mesh_vtk(mesh, path, cell_data={"pressure": pmean},
                   point_data={"velocity": vel})


def run(cfg: RunConfig) -> int:
    """Execute a validated RunConfig; returns the process exit code."""
    outdir = Path(cfg.outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 1

    try:
        if cfg.command == "mesh":
            mesh = _build_mesh(cfg)
            write_mesh_json(mesh, outdir / "mesh.json")
            write_mesh_vtk(mesh, outdir / "mesh.vtk")
            print(f"mesh: {mesh.n_cells} cells, {mesh.n_edges} edges, "
                  f"{mesh.n_vertices} vertices, h = {mesh.h:.6g}")
        elif cfg.command == "solve":
            mesh = _build_mesh(cfg)
            case = verify.get_case(cfg.case, nu=cfg.nu)
            system = assemble(mesh, cfg.k, cfg.nu, case.f, case.g)
            solution = solve_stokes(system, _solver_config(cfg))
            e1, e0, ep = verify.error_norms(mesh, cfg.k, solution, case)
            write_mesh_json(mesh, outdir / "mesh.json")
            _write_solution_vtk(mesh, cfg.k, solution, outdir / "solution.vtk")
            print(f"case={cfg.case} k={cfg.k} cells={mesh.n_cells} "
                  f"h={mesh.h:.6g} residual={solution.residual:.3e}")
            print(f"e1={e1:.6e} e0={e0:.6e} ep={ep:.6e}")
        elif cfg.command == "convergence":
            case = verify.get_case(cfg.case, nu=cfg.nu)
            meshes = [_build_mesh(cfg, level=i) for i in range(cfg.levels)]
            report = verify.convergence_study(case, cfg.k, meshes,
                                              solver_config=_solver_config(cfg))
            report.family = cfg.mesh.partition(":")[0] or "custom"
            report.write_csv(outdir / "convergence.csv")
            sys.stdout.write(report.to_csv())
        elif cfg.command == "infsup":
            lines = ["level,h,beta"]
            betas = []
            for i in range(cfg.levels):
                mesh = _build_mesh(cfg, level=i)
                beta = verify.estimate_infsup(mesh, cfg.k, nu=cfg.nu)
                betas.append(beta)
                lines.append(f"{i},{mesh.h:.17g},{beta:.17g}")
            (outdir / "infsup.csv").write_text("\n".join(lines) + "\n")
            for line in lines:
                print(line)
            if min(betas) <= 0:
                print("error: nonpositive inf-sup estimate", file=sys.stderr)
                return 1
    except NcvemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: artifact write failed: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except (InvalidValue, UnknownFlag) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        # argparse exits with its own code on unknown flags; normalize to 2
        return 2 if exc.code not in (0, None) else 0
    if cfg.mesh_file is not None and not Path(cfg.mesh_file).exists():
        print(f"config error: mesh file not found: {cfg.mesh_file}",
              file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
