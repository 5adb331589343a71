"""Command-line experiment runner.

::

    hdm run --method {fv|gr} --problem {ex1|ex2|ex3} --family {square|diagonal|files:<glob>}
            --levels N [--r R] [--b {identity|laplacian|plate:<gamma>}] --out <csv> [--plot <svg>]
    hdm indicators <same flags>
    hdm validate-mesh <path>
    hdm gen-mesh {square|diagonal} --n N --out <path>

Built-in families start at ``n = 4`` and double ``n`` at every level.  Exit
status is 1 for configuration errors and 2 for numerical or input errors.
``HDM_THREADS`` caps the number of levels processed concurrently.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import __version__
from .core import ConvergenceReport, LevelResult, assemble, check_error_estimate, compute_errors
from .errors import ConfigurationError, HdmError, InputError, NumericalError
from .linalg import solve_spd
from .mesh import gen_diagonal_triangulation, gen_square_grid, load_mesh, save_mesh, validate_delta_adapted
from .plot import convergence_svg
from .problems import PROBLEMS, manufactured_problem
from .tensor import make_tensor

__all__ = ["INDICATOR_HEADER", "main", "build_parser", "level_meshes", "parse_tensor"]

INDICATOR_HEADER = ["h", "C", "S", "W", "lhs", "rhs"]
COARSEST = 4


def parse_tensor(spec: str | None, method: str):
    """Tensor from ``identity``, ``laplacian`` or ``plate:<gamma>``; default per method."""
    if spec is None:
        spec = "laplacian" if method == "fv" else "identity"
    kind, _, arg = spec.partition(":")
    if kind == "plate":
        try:
            gamma = float(arg)
        except ValueError:
            raise InputError(f"plate tensor needs a Poisson ratio, e.g. plate:0.3, got {spec!r}") from None
        return make_tensor("plate", dim=2, gamma=gamma)
    if kind in ("identity", "laplacian") and not arg:
        return make_tensor(kind, dim=2)
    raise InputError(f"unknown tensor {spec!r}; use identity, laplacian or plate:<gamma>")


def level_meshes(family: str, levels: int | None, method: str):
    """Mesh factories, one per level, for a family name."""
    if family.startswith("files:"):
        paths = sorted(glob.glob(family[len("files:"):]))
        if not paths:
            raise InputError(f"no mesh files match {family[len('files:'):]!r}")
        if levels is not None:
            paths = paths[:levels]
        return [lambda p=p: load_mesh(p) for p in paths]
    if levels is None or levels < 1:
        raise InputError("--levels must be a positive integer")
    ns = [COARSEST * 2**k for k in range(levels)]
    if family == "square":
        return [lambda n=n: gen_square_grid(n) for n in ns]
    if family == "diagonal":
        colloc = "circumcenter" if method == "fv" else "centroid"
        return [lambda n=n: gen_diagonal_triangulation(n, colloc) for n in ns]
    raise InputError(f"unknown mesh family {family!r}")


def _factory(args):
    from .fv import build_fv_hd
    from .gr import build_gr_hd

    B = parse_tensor(args.b, args.method)
    if args.method == "fv":
        return lambda mesh: build_fv_hd(mesh, B)
    return lambda mesh: build_gr_hd(mesh, B, strategy=args.strategy, r=args.r)


def _map_levels(fn, items):
    workers = max(1, int(os.environ.get("HDM_THREADS", "1") or 1))
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class _Setup:
    meshes: list
    build: object
    exact: object


def _setup(args) -> _Setup:
    if args.r is not None and not args.r > 0:
        raise InputError("--r must be positive")
    return _Setup(level_meshes(args.family, args.levels, args.method), _factory(args), manufactured_problem(args.problem).exact)


def _write(text: str, target: str | None):
    if target is None or target == "-":
        sys.stdout.write(text)
    else:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_run(args) -> int:
    setup = _setup(args)

    def one(mesh_fn):
        hd = setup.build(mesh_fn())
        system = assemble(hd, setup.exact.f)
        u, info = solve_spd(system, return_info=True)
        eu, eg, eh = compute_errors(hd, u, setup.exact)
        return LevelResult(hd.h, hd.dof_report.total, hd.dof_report.free, system.nnz, eu, eg, eh, info.relative_residual)

    rows = _map_levels(one, setup.meshes)
    meta = {"method": args.method, "problem": args.problem, "family": args.family, "r": args.r}
    report = ConvergenceReport(rows=rows, meta=meta)
    _write(report.to_csv(), args.out)
    if args.plot:
        title = f"{args.method} {args.problem} {args.family}" + (f" r={args.r:g}" if args.method == "gr" else "")
        with open(args.plot, "w", encoding="utf-8") as fh:
            fh.write(convergence_svg(report, title=title))
    if args.verbose:
        print(report.format(), file=sys.stderr)
    return 0


def cmd_indicators(args) -> int:
    setup = _setup(args)

    def one(mesh_fn):
        hd = setup.build(mesh_fn())
        system = assemble(hd, setup.exact.f)
        u = solve_spd(system)
        chk = check_error_estimate(hd, setup.exact, u=u, with_coercivity=not args.no_coercivity)
        return hd.h, chk

    results = _map_levels(one, setup.meshes)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INDICATOR_HEADER)
    fmt = lambda v: "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.17g}"  # noqa: E731
    for h, chk in results:
        writer.writerow([fmt(h), fmt(chk.C), fmt(chk.S), fmt(chk.W), fmt(chk.lhs), fmt(chk.rhs)])
    _write(buf.getvalue(), args.out)
    failed = [i for i, (_, chk) in enumerate(results) if not chk.holds]
    if failed:
        raise NumericalError(f"error estimate violated at level(s) {failed}")
    return 0


def cmd_validate_mesh(args) -> int:
    mesh = load_mesh(args.path)
    report = validate_delta_adapted(mesh, tol=args.tol)
    print(report.summary())
    return 0 if report.is_valid else 1


def cmd_gen_mesh(args) -> int:
    if args.kind == "square":
        mesh = gen_square_grid(args.n)
    else:
        mesh = gen_diagonal_triangulation(args.n, args.collocation)
    save_mesh(mesh, args.out)
    return 0


def _add_study_flags(p):
    p.add_argument("--method", choices=["fv", "gr"], required=True)
    p.add_argument("--problem", choices=sorted(PROBLEMS), default="ex1")
    p.add_argument("--family", default="square", help="square, diagonal or files:<glob>")
    p.add_argument("--levels", type=int, default=None, help="number of levels (n = 4, 8, 16, ...)")
    p.add_argument("--r", type=float, default=1.0, help="stabilisation factor (gr)")
    p.add_argument("--b", default=None, help="identity, laplacian or plate:<gamma>")
    p.add_argument("--strategy", choices=["relocate", "elementwise"], default="relocate",
                   help="boundary modification of the dual basis (gr)")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdm", description="Hessian discretisation experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="convergence study")
    _add_study_flags(run)
    run.add_argument("--plot", default=None, help="SVG output path")
    run.add_argument("-v", "--verbose", action="store_true", help="print the table to stderr")
    run.set_defaults(func=cmd_run)

    ind = sub.add_parser("indicators", help="coercivity, consistency and conformity indicators per level")
    _add_study_flags(ind)
    ind.add_argument("--no-coercivity", action="store_true", help="skip the power iteration for C")
    ind.set_defaults(func=cmd_indicators)

    val = sub.add_parser("validate-mesh", help="check that a mesh file is Δ-adapted")
    val.add_argument("path")
    val.add_argument("--tol", type=float, default=1e-10)
    val.set_defaults(func=cmd_validate_mesh)

    gen = sub.add_parser("gen-mesh", help="write a generated mesh")
    gen.add_argument("kind", choices=["square", "diagonal"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--collocation", choices=["circumcenter", "centroid"], default="circumcenter")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_mesh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"hdm: configuration error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, InputError, HdmError) as exc:
        print(f"hdm: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hdm: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
