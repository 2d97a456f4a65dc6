"""Command line driver: ``cutdg converge``, ``cutdg condnum``, ``cutdg selftest``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dg, harness
from .cutcomplex import build_complex, write_surface
from .geometry import get_case
from .mesh import build_box_mesh, write_mesh_vtk

log = logging.getLogger("cutdg")

MAX_COND_LEVEL = 2


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment.  Keys may use dashes or underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(parser: argparse.ArgumentParser, config: dict[str, str]) -> dict:
    """Convert config strings with the type of the matching option."""
    actions = {a.dest: a for a in parser._actions}
    out = {}
    for key, value in config.items():
        act = actions.get(key)
        if act is None:
            raise ValueError(f"unknown config key {key!r} for '{parser.prog}'")
        if act.nargs == 0:  # store_true / store_const
            out[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = act.type(value) if act.type else value
            if act.choices and out[key] not in act.choices:
                raise ValueError(f"config {key}={value!r} not in {sorted(act.choices)}")
    return out


def _add_form_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta-e", type=float, default=50.0, help="edge penalty (default 50)")
    p.add_argument("--beta-f", type=float, default=50.0, help="face value penalty (default 50)")
    p.add_argument("--gamma", type=float, default=0.01, help="face gradient penalty (default 0.01)")
    p.add_argument("--mean-as-written", action="store_true",
                   help="average flux without the factor 1/2")
    p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    p.add_argument("--plot", type=Path, help="also write a gnuplot script")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutdg", description=__doc__)
    parser.add_argument("--config", type=Path, help="key=value file; command line flags win")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", help="convergence study on a builtin surface")
    c.add_argument("--case", choices=["sphere", "orthocircle"], default="sphere")
    c.add_argument("--levels", type=int, default=4, help="number of refinement levels")
    c.add_argument("--variant", choices=["reaction", "pure"], default="reaction")
    c.add_argument("--solver", choices=["auto", "dense", "direct", "cg"], default="auto")
    c.add_argument("--dump-mesh", type=Path, help="legacy VTK file of the finest active mesh")
    c.add_argument("--dump-surface", type=Path, help="triangle soup of the finest surface")
    c.add_argument("--dump-matrix", type=Path, help="coordinate dump of the finest stiffness")
    _add_form_args(c)

    k = sub.add_parser("condnum", help="condition numbers of the shifted sphere")
    k.add_argument("--levels", type=int, default=None,
                   help=f"finest level, inclusive (default {MAX_COND_LEVEL}; 3 with --deep)")
    k.add_argument("--steps", type=int, default=50, help="delta subdivisions")
    k.add_argument("--precond", choices=["none", "jacobi"], default="none")
    k.add_argument("--deep", action="store_true", help=f"allow levels above {MAX_COND_LEVEL}")
    _add_form_args(k)

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _subparser(parser, name):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[name]
    raise KeyError(name)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = _subparser(parser, args.command)
        sub.set_defaults(**_coerce(sub, read_config(args.config)))
        args = parser.parse_args(argv)
    return args


def _write(reports, args, kind):
    if args.out is None:
        sys.stdout.write(harness.format_csv(reports, kind))
    else:
        harness.emit_csv(reports, args.out, kind)
    if args.plot is not None:
        harness.emit_plotscript(reports, args.plot, args.out or "data.csv")


def cmd_converge(args) -> int:
    mf = 1.0 if args.mean_as_written else 0.5
    reports = harness.run_convergence(args.case, args.levels, args.beta_e, args.beta_f,
                                      args.gamma, mf, args.variant, solver=args.solver)
    _write(reports, args, "errors")
    if args.dump_mesh or args.dump_surface or args.dump_matrix:
        tc = get_case(args.case)
        k = args.levels - 1
        mesh = build_box_mesh((0.0, 0.0, 0.0), tc.bounding_halfwidth, harness.N0 * 2 ** k)
        cx = build_complex(mesh, tc.level_set)
        if args.dump_mesh:
            write_mesh_vtk(args.dump_mesh, mesh, cx.active_tets)
        if args.dump_surface:
            write_surface(args.dump_surface, cx)
        if args.dump_matrix:
            A = harness.stiffness_matrix(cx, args.beta_e, args.beta_f, args.gamma, mf)
            dg.dump_matrix(args.dump_matrix, A)
    return 0


def cmd_condnum(args) -> int:
    levels = args.levels if args.levels is not None else (3 if args.deep else MAX_COND_LEVEL)
    if levels > MAX_COND_LEVEL and not args.deep:
        raise ValueError(f"levels above {MAX_COND_LEVEL} need --deep")
    mf = 1.0 if args.mean_as_written else 0.5
    reports = harness.run_condnum(levels, args.steps, args.beta_e, args.beta_f, args.gamma,
                                  args.precond, mf)
    _write(reports, args, "cond")
    return 0


def cmd_selftest(args) -> int:
    from . import selftest
    failures = selftest.run(verbose=True)
    return 1 if failures else 0


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (OSError, ValueError) as exc:
        print(f"cutdg: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"converge": cmd_converge, "condnum": cmd_condnum, "selftest": cmd_selftest}
    try:
        return handler[args.command](args)
    except Exception as exc:  # report, do not dump a traceback
        log.debug("failure", exc_info=True)
        print(f"cutdg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
