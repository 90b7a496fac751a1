"""Command-line front end.

Every command prints (or writes, with ``--report``) a structured text report;
figures are rendered next to a written report. Exit codes: 0 success,
1 solver did not converge, 2 malformed input or usage, 3 infeasible or
unsupported input, 4 other errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import meshgen
from .energies import MaterialParameters, make_energy
from .errors import (EndpointInfeasible, InfeasibleStart, MeshTopologyError, NotOnManifold,
                     NricError, ParseError, ReferenceDegenerate, TriangleInequalityViolated,
                     DegenerateFace)
from .fileio import (read_constraints, read_mesh, read_nric, write_mesh, write_nric,
                     write_order_sidecar)
from .integrability import ConstraintSystem, StackedConstraints
from .mesh import SimplicialSurface, angle_defects, edge_lengths, forward_map, triangle_inequalities
from .objectives import (dissimilarity_objective, elastic_average_objective, geodesic_objective,
                         initialize_geodesic, linear_blend)
from .optim import SolverConfig, solve_constrained
from .reconstruction import STRATEGIES, preassembled_weights, reconstruct
from .report import (Report, convergence_figure, histogram_figure, mesh_figure,
                     segment_energy_figure)
from .rigidity import rigidity_test

logger = logging.getLogger("nric")

EXIT_OK, EXIT_NONCONVERGED, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_ERROR = 0, 1, 2, 3, 4

_INFEASIBLE_ERRORS = (MeshTopologyError, TriangleInequalityViolated, ReferenceDegenerate,
                      InfeasibleStart, EndpointInfeasible, NotOnManifold, DegenerateFace)


# ----------------------------------------------------------------- helpers
@contextmanager
def _thread_limit(n):
    if not n:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.warning("threadpoolctl not available; --threads ignored")
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _load(path):
    """Surface, NRIC vector and positions (``None`` for NRIC input)."""
    if Path(path).suffix.lower() == ".nric":
        surface, z = read_nric(path)
        return surface, z, None
    F, X = read_mesh(path)
    surface = SimplicialSurface(F, len(X))
    return surface, forward_map(surface, X), X


def _config(args) -> SolverConfig:
    return SolverConfig.from_file(args.config) if args.config else SolverConfig()


def _params(args) -> MaterialParameters:
    return MaterialParameters(delta=args.delta)


def _solver_section(report: Report, rep):
    report.add("solver", **rep.as_dict())
    report.table("outer_iterations", ["outer", "constraint_inf", "lagrangian_grad", "mu", "inner"],
                 [[h["outer"], h["constraint_inf"], h["lagrangian_grad"], h["mu"], h["inner"]]
                  for h in rep.history])
    if rep.history:
        report.figure("convergence", convergence_figure(rep.history))


def _reconstruct_into(report, surface, z, args, system, name="reconstruction"):
    X, rr = reconstruct(surface, z, args.strategy if args.strategy != "pre" else "mst",
                        args.gn_steps, system=system, delta=args.delta)
    report.add(name, **rr.as_dict())
    return X, rr


def _finish(report: Report, args, code: int) -> int:
    if args.report:
        for p in report.write(args.report):
            logger.info("wrote %s", p)
    else:
        sys.stdout.write(report.render())
    return code


# ----------------------------------------------------------------- commands
def cmd_check(args) -> int:
    surface, z, _ = _load(args.input)
    system = ConstraintSystem(surface)
    report = Report("check")
    T, ok = triangle_inequalities(surface, z)
    q = system.residual(z).reshape(-1, 3)
    qn = np.linalg.norm(q, axis=1)
    report.add(vertices=surface.vertex_count, edges=surface.edge_count, faces=surface.face_count,
               interior_vertices=len(surface.interior_vertices),
               euler_characteristic=surface.euler_characteristic,
               triangle_inequalities="ok" if ok else "violated",
               violating_faces=int(np.sum(np.any(T <= 0, axis=1))),
               constraint_inf=float(np.max(np.abs(q))) if q.size else 0.0)
    top = np.argsort(-qn, kind="stable")[:args.top]
    report.table("top_violations", ["vertex", "norm", "q1", "q2", "q3"],
                 [[int(surface.interior_vertices[i]), qn[i], *q[i]] for i in top])
    if q.size:
        report.figure("violations", histogram_figure(np.log10(np.maximum(qn, 1e-300)),
                                                     "integrability violation", "log10 |Q_v|"))
    return _finish(report, args, EXIT_OK)


def _parse_selector(spec, surface):
    if spec is None:
        return None
    if spec == "none":
        return np.zeros(surface.n_angles, bool)
    text = Path(spec).read_text() if Path(spec).exists() else spec
    try:
        edges = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ParseError("selector must list edge indices") from None
    ranks = surface.interior_rank[np.array(edges, dtype=np.int64)]
    if np.any(ranks < 0):
        raise ParseError("selector contains boundary edges")
    sel = np.zeros(surface.n_angles, bool)
    sel[ranks] = True
    return sel


def cmd_rigidity(args) -> int:
    surface, z, X = _load(args.input)
    system = ConstraintSystem(surface)
    res = rigidity_test(system, z, _parse_selector(args.select, surface), args.threshold)
    report = Report("rigidity")
    report.add(status=res.status, lambda0=res.lambda0, sigma_max=res.sigma_max,
               normalized_lambda0=res.normalized_lambda0, threshold=res.threshold,
               tangent_dimension=res.tangent_dimension,
               note="zero threshold is a numerical judgment: lambda0 < threshold * sigma_max")
    if res.variation is not None:
        E = surface.edge_count
        w = res.variation
        report.add("variation", support_size=len(res.support),
                   length_part_norm=float(np.linalg.norm(w[:E])),
                   constraint_residual=float(np.linalg.norm(system.jacobian(z) @ w)))
        report.table("variation", ["edge", "angle_rate"],
                     [[int(surface.interior_edges[k]), w[E + k]] for k in res.support])
        if X is not None:
            rate = np.zeros(surface.edge_count)
            rate[surface.interior_edges] = np.abs(w[E:])
            per_face = rate[surface.face_edges].max(axis=1)
            report.figure("variation", mesh_figure(X, surface.faces, per_face,
                                                   "isometric variation", label="|d theta|"))
    return _finish(report, args, EXIT_OK)


def cmd_deform(args) -> int:
    surface, z, X = _load(args.input)
    system = ConstraintSystem(surface)
    cons = read_constraints(args.constraints, surface) if args.constraints else None
    free = cons.free if cons else np.ones(surface.dim, bool)
    if args.fix_lengths:
        free[:surface.edge_count] = False
    z0 = cons.apply(z) if cons else z.copy()
    energy = make_energy(args.energy, surface, z, _params(args))
    zs, _, rep = solve_constrained(dissimilarity_objective(energy, z), system, z0,
                                   _config(args), free=free)
    report = Report("deform")
    report.add(fixed_entries=int(np.sum(~free)), energy=args.energy,
               energy_value=energy.value(z, zs))
    _solver_section(report, rep)
    Xr, rr = _reconstruct_into(report, surface, zs, args, system)
    defect = np.abs(angle_defects(surface, edge_lengths(surface, Xr)))
    report.add("angle_defect", max=float(defect.max()) if defect.size else 0.0,
               mean=float(defect.mean()) if defect.size else 0.0)
    report.table("angle_defect", ["vertex", "defect"],
                 [[int(v), d] for v, d in zip(surface.interior_vertices, defect)])
    vd = np.zeros(surface.vertex_count)
    vd[surface.interior_vertices] = defect
    report.figure("angle_defect", mesh_figure(Xr, surface.faces, vd, "angle defect",
                                              cmap="magma", label="|2 pi - sum gamma|"))
    write_mesh(args.output, Xr, surface.faces)
    return _finish(report, args, EXIT_OK if rep.converged else EXIT_NONCONVERGED)


def cmd_average(args) -> int:
    loaded = [_load(p) for p in args.inputs]
    surface = loaded[0][0]
    for s, _, _ in loaded[1:]:
        if not np.array_equal(s.faces, surface.faces):
            raise ParseError("all inputs must share one connectivity")
    zs = [z for _, z, _ in loaded]
    w = np.ones(len(zs)) if args.weights is None else np.array(args.weights, float)
    if len(w) != len(zs):
        raise ParseError("need one weight per input")
    if np.any(w < 0) or not w.sum() > 0:
        raise ParseError("weights must be nonnegative and not all zero")
    w = w / w.sum()
    system = ConstraintSystem(surface)
    energies = [make_energy(args.energy, surface, zi, _params(args)) for zi in zs]
    objective = elastic_average_objective(energies, zs, w)
    z0 = np.sum(w[:, None] * np.array(zs), axis=0)
    if not (system.admissible(z0) and objective.is_feasible(z0)):
        z0 = zs[int(np.argmax(w))]
    zs_opt, _, rep = solve_constrained(objective, system, z0, _config(args))
    report = Report("average")
    report.add(inputs=len(zs), weights=" ".join(f"{x:.6g}" for x in w))
    report.table("energy_to_inputs", ["input", "energy"],
                 [[i, E.value(zi, zs_opt)] for i, (E, zi) in enumerate(zip(energies, zs))])
    _solver_section(report, rep)
    Xr, _ = _reconstruct_into(report, surface, zs_opt, args, system)
    report.figure("average", mesh_figure(Xr, surface.faces, None, "elastic average"))
    write_mesh(args.output, Xr, surface.faces)
    return _finish(report, args, EXIT_OK if rep.converged else EXIT_NONCONVERGED)


def cmd_geodesic(args) -> int:
    sa, za, Xa = _load(args.start)
    sb, zb, _ = _load(args.end)
    if not np.array_equal(sa.faces, sb.faces):
        raise ParseError("endpoints must share one connectivity")
    surface, system, K = sa, ConstraintSystem(sa), args.K
    E = surface.edge_count
    free = np.ones(surface.dim, bool)
    if args.fix_lengths:
        if not np.allclose(za[:E], zb[:E], rtol=1e-9, atol=0):
            raise EndpointInfeasible("--fix-lengths needs endpoints with equal edge lengths")
        zb = zb.copy()
        zb[:E] = za[:E]
        free[:E] = False
    energy = make_energy(args.energy, surface, za, _params(args))
    path = initialize_geodesic(surface, za, zb, K, energy)
    lin = path.segment_energies()
    x, _, rep = solve_constrained(geodesic_objective(path), StackedConstraints(system, K - 1),
                                  path.interior, _config(args), free=np.tile(free, K - 1))
    path = path.with_interior(x)
    seg = path.segment_energies()
    report = Report("geodesic")
    report.add(K=K, energy=args.energy, fix_lengths=bool(args.fix_lengths),
               path_energy=path.path_energy(),
               segment_rel_std=float(seg.std() / seg.mean()) if seg.mean() > 0 else 0.0,
               max_length_deviation=float(np.max(np.abs(path.shapes[:, :E] - za[:E]))))
    report.table("segment_energies", ["k", "geodesic", "linear_initialization"],
                 [[k + 1, seg[k], lin[k]] for k in range(K)])
    report.figure("segment_energies", segment_energy_figure(
        {"geodesic": seg, "linear initialization": lin}))
    _solver_section(report, rep)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, zk in enumerate(path.shapes):
        if k == 0 and Xa is not None:
            Xk = Xa
        else:
            Xk, rr = reconstruct(surface, zk, args.strategy if args.strategy != "pre" else "mst",
                                 args.gn_steps, system=system, delta=args.delta)
            rows.append([k, rr.nric_error])
        write_mesh(out / f"shape_{k:03d}.obj", Xk, surface.faces)
    report.table("reconstruction", ["k", "nric_error"], rows)
    return _finish(report, args, EXIT_OK if rep.converged else EXIT_NONCONVERGED)


def cmd_reconstruct(args) -> int:
    loaded = [_load(p) for p in args.inputs]
    surface = loaded[0][0]
    system = ConstraintSystem(surface)
    weights = None
    if args.strategy == "pre":
        weights = preassembled_weights(system, [z for _, z, _ in loaded])
    report = Report("reconstruct")
    out = Path(args.output)
    for i, (s, z, _) in enumerate(loaded):
        X, rr = reconstruct(s, z, args.strategy, args.gn_steps, weights=weights,
                            system=system, delta=args.delta)
        target = out if len(loaded) == 1 else out.with_name(f"{out.stem}_{i:03d}{out.suffix}")
        write_mesh(target, X, s.faces)
        write_order_sidecar(target.with_suffix(".order"), rr.order)
        report.add(f"input_{i}", path=args.inputs[i], output=str(target), **rr.as_dict())
        if i == 0:
            report.figure("traversal_order", mesh_figure(X, s.faces, rr.order,
                                                         "traversal order", label="rank"))
    return _finish(report, args, EXIT_OK)


def cmd_convert(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    report = Report("convert")
    if dst.suffix.lower() == ".nric":
        surface, z, _ = _load(src)
        write_nric(dst, surface, z)
    else:
        surface, z, X = _load(src)
        if X is None:
            X, rr = reconstruct(surface, z, args.strategy if args.strategy != "pre" else "mst",
                                args.gn_steps, delta=args.delta)
            report.add("reconstruction", **rr.as_dict())
        write_mesh(dst, X, surface.faces)
    report.add(input=str(src), output=str(dst), dim=surface.dim)
    return _finish(report, args, EXIT_OK)


_GENERATORS = {
    "tetrahedron": lambda a: meshgen.tetrahedron(),
    "icosahedron": lambda a: meshgen.icosahedron(),
    "icosphere": lambda a: meshgen.icosphere(a.n),
    "grid": lambda a: meshgen.grid(a.n, a.n),
    "bumpy_plate": lambda a: meshgen.bumpy_plate(a.n, a.n, a.amplitude, a.seed),
    "dome": lambda a: meshgen.dome(a.n, a.n, a.amplitude),
    "cylinder": lambda a: meshgen.cylinder_bend(a.n, a.n, a.amplitude),
    "saddle": lambda a: meshgen.saddle(a.n, a.n, a.amplitude),
    "creased_strip": lambda a: meshgen.creased_strip(2 * a.n, a.n, 0.0),
}


def cmd_generate(args) -> int:
    F, X = _GENERATORS[args.kind](args)
    write_mesh(args.output, X, F)
    report = Report("generate")
    report.add(kind=args.kind, vertices=len(X), faces=len(F), output=args.output)
    if args.constraints:
        if args.kind != "creased_strip":
            raise ParseError("--constraints is only available for creased_strip")
        surface = SimplicialSurface(F, len(X))
        pairs = set(meshgen.crease_edges(F, X, X[:, 0].max() / 2))
        lines = ["L*"] + [f"A {e} {args.fold:.17g}" for e, (a, b) in enumerate(surface.edges)
                          if (a, b) in pairs and surface.interior_rank[e] >= 0]
        Path(args.constraints).write_text("\n".join(lines) + "\n")
        report.add(constraints=args.constraints, crease_edges=len(lines) - 1)
    return _finish(report, args, EXIT_OK)


# ------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="solver configuration (key = value lines)")
    common.add_argument("--strategy", choices=STRATEGIES, default="mst",
                        help="spanning tree used for reconstruction")
    common.add_argument("--gn-steps", type=int, default=1, help="Gauss-Newton refinement steps")
    common.add_argument("--delta", type=float, default=1e-2, help="thickness (bending weight)")
    common.add_argument("--energy", choices=("nonlinear", "quadratic"), default="quadratic")
    common.add_argument("--fix-lengths", action="store_true", help="eliminate all edge lengths")
    common.add_argument("--threads", type=int, default=0, help="cap on BLAS worker threads")
    common.add_argument("--report", help="write the report here (figures go next to it)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="nric", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", parents=[common], help="integrability and triangle inequalities")
    s.add_argument("input")
    s.add_argument("--top", type=int, default=10, help="number of worst vertices listed")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("rigidity", parents=[common], help="infinitesimal rigidity test")
    s.add_argument("input")
    s.add_argument("--select", help="angle edges allowed to vary: list, file, or 'none'")
    s.add_argument("--threshold", type=float, default=1e-7)
    s.set_defaults(func=cmd_rigidity)

    s = sub.add_parser("deform", parents=[common], help="project onto integrable shapes")
    s.add_argument("input")
    s.add_argument("-c", "--constraints", help="fixed lengths / angles")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_deform)

    s = sub.add_parser("average", parents=[common], help="weighted elastic average")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-w", "--weights", type=float, nargs="+")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_average)

    s = sub.add_parser("geodesic", parents=[common], help="discrete geodesic between two shapes")
    s.add_argument("start")
    s.add_argument("end")
    s.add_argument("-K", type=int, default=10, help="number of segments")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_geodesic)

    s = sub.add_parser("reconstruct", parents=[common], help="vertex positions from NRIC")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("convert", parents=[common], help="mesh <-> NRIC")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("generate", parents=[common], help="write a synthetic test mesh")
    s.add_argument("kind", choices=sorted(_GENERATORS))
    s.add_argument("output")
    s.add_argument("-n", type=int, default=8, help="resolution")
    s.add_argument("--amplitude", type=float, default=0.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--constraints", help="creased_strip: also write a folding constraint file")
    s.add_argument("--fold", type=float, default=np.pi / 2, help="crease angle for --constraints")
    s.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        with _thread_limit(args.threads):
            code = args.func(args)
    except ParseError as exc:
        logger.error("parse error: %s", exc)
        return EXIT_PARSE
    except _INFEASIBLE_ERRORS as exc:
        logger.error("infeasible input: %s", exc)
        return EXIT_INFEASIBLE
    except (NricError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR
    logger.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
