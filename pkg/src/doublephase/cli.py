"""Command line entry point: check, solve, geometry, fibering, sweep.

Exit status: 0 on success, 1 on a numerical or hypothesis failure,
2 on a malformed configuration or command line.
"""

import argparse
import configparser
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import ConfigError, load_config, parse_config
from .hypotheses import check_all, check_H1
from .mesh import read_csv, write_csv, write_vtk
from .nehari import NehariError, fibering_profile, project_ray, write_profile_csv
from .solvers import (GUESSES, SolverError, initial_guess, mountain_pass_geometry,
                      solve_constant_sign, solve_sign_changing)

__all__ = ["run", "main", "build_parser"]

OK, FAILURE, CONFIG_ERROR = 0, 1, 2


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI configuration file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the solver seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    common.add_argument("--force", action="store_true",
                        help="solve even when (H1) fails")
    parser = argparse.ArgumentParser(prog="doublephase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="hypothesis report")
    sub.add_parser("solve", parents=[common], help="positive, negative and sign-changing solutions")
    sub.add_parser("geometry", parents=[common], help="mountain pass diagnostics")
    sub.add_parser("fibering", parents=[common], help="fibering profile along a ray")
    sub.add_parser("sweep", parents=[common], help="solves over a list of parameter values")
    return parser


def _prepare(out, rc):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(rc.text)


def _write(out, name, text):
    with open(os.path.join(out, name), "w") as fh:
        fh.write(text)


def _flag(rc, section, key, default=False):
    val = rc.section(section).get(key)
    if val is None:
        return default
    return val.strip().lower() in ("1", "true", "yes", "on")


def cmd_check(rc, args):
    rep = check_all(rc.problem, seed=rc.solver.seed)
    text = rep.to_text()
    _write(args.out, "report.txt", text)
    sys.stdout.write(text)
    return FAILURE if rep.failures else OK


def cmd_solve(rc, args, out=None, quiet=False):
    out = out or args.out
    cfg, scfg = rc.problem, rc.solver
    h1 = check_H1(cfg)
    if h1.any_fail() and not args.force:
        _write(out, "report.txt", h1.to_text() + "status=refused\n")
        print("error: (H1) fails; refusing to solve (use --force to override)", file=sys.stderr)
        for e in h1.failures:
            print("  " + e.to_line(), file=sys.stderr)
        return FAILURE
    hyp = check_all(cfg, seed=scfg.seed)
    _write(out, "hypotheses.txt", hyp.to_text())
    chunks = [f"seed={scfg.seed}\n"]
    status = OK
    solves = (("u0", lambda: solve_constant_sign(cfg, scfg, "+")),
              ("v0", lambda: solve_constant_sign(cfg, scfg, "-")),
              ("w0", lambda: solve_sign_changing(cfg, replace(scfg, initial_guess=None))))
    for name, solve in solves:
        try:
            rep = solve()
        except (SolverError, NehariError) as exc:
            code = getattr(exc, "code", "failure")
            chunks.append(f"[{name}]\nerror={code}\nmessage={exc}\n")
            print(f"error: {name}: {exc}", file=sys.stderr)
            status = FAILURE
            continue
        chunks.append(rep.to_text().replace(f"[{rep.kind}]", f"[{name}]\nkind={rep.kind}", 1))
        if not rep.converged:
            status = FAILURE
        if _flag(rc, "output", "fields", True):
            write_csv(rep.field, os.path.join(out, f"{name}.csv"))
        if _flag(rc, "output", "vtk"):
            write_vtk(rep.field, os.path.join(out, f"{name}.vtk"), name)
    chunks.append(f"status={'ok' if status == OK else 'failed'}\n")
    _write(out, "report.txt", "".join(chunks))
    if not quiet:
        sys.stdout.write("".join(chunks))
    return status


def cmd_geometry(rc, args):
    opts = rc.section("geometry")
    try:
        deltas = [float(v) for v in opts.get("deltas", "0.1").replace(",", " ").split()]
        samples = int(opts.get("samples", 200))
        doublings = int(opts.get("doublings", 40))
        seed = int(opts.get("seed", rc.solver.seed))
    except ValueError as exc:
        raise ConfigError(f"bad [geometry] value: {exc}", rc.options["_lines"].get(("geometry", None)),
                          rc.path) from None
    if args.seed is not None:
        seed = args.seed
    geo = mountain_pass_geometry(rc.problem, deltas=deltas, samples=samples, seed=seed,
                                 doublings=doublings)
    text = geo.to_text()
    _write(args.out, "report.txt", text)
    sys.stdout.write(text)
    ok = all(m > 0 for m in geo.m_delta) and geo.first_negative_t < np.inf
    return OK if ok else FAILURE


def _fiber_field(rc, spec):
    grid = rc.problem.grid
    if spec == "zero":
        return grid.zeros()
    if spec in GUESSES:
        return initial_guess(grid, spec)
    if spec.startswith("csv:"):
        return read_csv(spec[4:], grid)
    raise ConfigError(f"fibering.field must be 'zero', one of {GUESSES} or csv:PATH, got {spec!r}",
                      rc.options["_lines"].get(("fibering", "field")), rc.path)


def cmd_fibering(rc, args):
    opts = rc.section("fibering")
    try:
        t_min = float(opts.get("t_min", 1e-2))
        t_max = float(opts.get("t_max", 1e2))
        points = int(opts.get("points", 201))
    except ValueError as exc:
        raise ConfigError(f"bad [fibering] value: {exc}",
                          rc.options["_lines"].get(("fibering", None)), rc.path) from None
    which = opts.get("which", "phi")
    if which not in ("phi", "plus", "minus"):
        raise ConfigError("fibering.which must be phi, plus or minus",
                          rc.options["_lines"].get(("fibering", "which")), rc.path)
    u = _fiber_field(rc, opts.get("field", "bump"))
    if u.max_abs() == 0.0:
        print("error: the fibering map needs a nonzero field", file=sys.stderr)
        return FAILURE
    rows = fibering_profile(rc.problem, u, np.geomspace(t_min, t_max, points), which)
    write_profile_csv(rows, os.path.join(args.out, "profile.csv"))
    try:
        t_u = project_ray(rc.problem, u, which)
        text = f"which={which}\nt_u={t_u:.15g}\n"
        status = OK
    except NehariError as exc:
        text = f"which={which}\nerror={exc.code}\n"
        status = FAILURE
    _write(args.out, "report.txt", text)
    sys.stdout.write(text)
    return status


def _sweep_point(job):
    text, path, out, force = job
    rc = parse_config(text, path)
    os.makedirs(out, exist_ok=True)
    _prepare(out, rc)
    ns = argparse.Namespace(out=out, force=force)
    return cmd_solve(rc, ns, out, quiet=True)


def cmd_sweep(rc, args):
    opts = rc.section("sweep")
    lines = rc.options["_lines"]
    if "parameter" not in opts or "values" not in opts:
        raise ConfigError("[sweep] needs 'parameter' and 'values'", lines.get(("sweep", None)), rc.path)
    sec, _, key = opts["parameter"].partition(".")
    if not key:
        raise ConfigError("sweep.parameter must be SECTION.KEY", lines.get(("sweep", "parameter")),
                          rc.path)
    values = [v.strip() for v in opts["values"].split(";") if v.strip()]
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.read_string(rc.text)
    parser.remove_section("sweep")
    jobs = []
    for i, val in enumerate(values):
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, val)
        if args.seed is not None:
            if not parser.has_section("solver"):
                parser.add_section("solver")
            parser.set("solver", "seed", str(args.seed))
        buf = io.StringIO()
        parser.write(buf)
        out = os.path.join(args.out, f"point_{i:03d}")
        parse_config(buf.getvalue(), f"{rc.path}[{sec}.{key}={val}]")  # validate up front
        jobs.append((buf.getvalue(), rc.path, out, args.force))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_sweep_point, jobs))
    else:
        codes = [_sweep_point(j) for j in jobs]
    summary = "".join(f"point={i:03d} {sec}.{key}={v} status={'ok' if c == OK else 'failed'}\n"
                      for i, (v, c) in enumerate(zip(values, codes)))
    _write(args.out, "report.txt", summary)
    sys.stdout.write(summary)
    return OK if all(c == OK for c in codes) else FAILURE


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "geometry": cmd_geometry,
            "fibering": cmd_fibering, "sweep": cmd_sweep}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return CONFIG_ERROR if exc.code else OK
    try:
        rc = load_config(args.config)
        if args.seed is not None:
            rc.solver = replace(rc.solver, seed=args.seed)
        _prepare(args.out, rc)
        return COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (ValueError, SolverError, NehariError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
