"""INI run configuration.

Sections: [grid] [exponents] [weight] [nonlinearity] [solver] [output],
plus the optional subcommand sections [fibering] [geometry] [sweep].
Errors carry the line number of the offending key when it is known.
"""

import configparser
import re
from dataclasses import dataclass, field, fields as dc_fields

from .mesh import Grid
from .problem import FAMILIES, ExponentField, NonlinearitySpec, ProblemConfig, WeightField
from .solvers import SolverConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

SECTIONS = ("grid", "exponents", "weight", "nonlinearity", "solver", "output",
            "fibering", "geometry", "sweep")
REQUIRED = ("grid", "exponents", "weight", "nonlinearity")

KEYS = {
    "grid": {"extents", "nodes"},
    "exponents": {"p", "q", "direction"},
    "weight": {"mu"},
    "nonlinearity": {"family"} | {k for spec in FAMILIES.values() for k in spec},
    "solver": {f.name for f in dc_fields(SolverConfig)},
    "output": {"vtk", "fields"},
    "fibering": {"field", "which", "t_min", "t_max", "points"},
    "geometry": {"deltas", "samples", "doublings", "seed"},
    "sweep": {"parameter", "values"},
}


class ConfigError(Exception):
    def __init__(self, msg, line=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {msg}" if where else msg)
        self.line = line


def _key_lines(text):
    """(section, key) -> 1-based line number."""
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, None)] = n
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = n
    return lines


def _floats(text, n=None):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} values, got {len(vals)}")
    return vals


@dataclass
class RunConfig:
    problem: ProblemConfig
    solver: SolverConfig
    options: dict = field(default_factory=dict)
    text: str = ""
    path: str = None

    def section(self, name):
        return self.options.get(name, {})


def parse_config(text, path=None):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"expected a [section] header, got {exc.line.strip()!r}",
                          exc.lineno, path) from None
    except configparser.ParsingError as exc:
        line, text_ = exc.errors[0] if exc.errors else (None, "")
        raise ConfigError(f"malformed line {text_}", line, path) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0],
                          getattr(exc, "lineno", None), path) from None
    lines = _key_lines(text)

    def fail(msg, section, key=None):
        raise ConfigError(msg, lines.get((section, key), lines.get((section, None))), path)

    for sec in parser.sections():
        if sec not in SECTIONS:
            fail(f"unknown section [{sec}]", sec)
        for key in parser[sec]:
            if key not in KEYS[sec]:
                fail(f"unknown key {key!r} in [{sec}]", sec, key)
    for sec in REQUIRED:
        if not parser.has_section(sec):
            raise ConfigError(f"missing section [{sec}]", None, path)

    def get(sec, key, conv=str, default=None):
        if not parser.has_option(sec, key):
            if default is None:
                fail(f"missing key {key!r} in [{sec}]", sec)
            return default
        try:
            return conv(parser.get(sec, key))
        except (ValueError, TypeError) as exc:
            fail(f"bad value for {sec}.{key}: {exc}", sec, key)

    nodes = get("grid", "nodes", lambda s: [int(v) for v in _floats(s)])
    extents = get("grid", "extents", _floats, [1.0] * len(nodes))
    try:
        grid = Grid(tuple(extents), tuple(nodes))
    except ValueError as exc:
        fail(str(exc), "grid", "nodes")

    nl_opts = dict(parser["nonlinearity"])
    family = nl_opts.pop("family", None)
    if family is None:
        fail("missing key 'family' in [nonlinearity]", "nonlinearity")
    try:
        nl = NonlinearitySpec(family, **nl_opts)
    except ValueError as exc:
        fail(str(exc), "nonlinearity", "family")

    direction = get("exponents", "direction", lambda s: _floats(s, grid.dim),
                    [1.0] + [0.0] * (grid.dim - 1))
    built = {}
    for key, sec, kind in (("p", "exponents", ExponentField), ("q", "exponents", ExponentField),
                           ("mu", "weight", WeightField)):
        try:
            built[key] = kind.from_expr(grid, get(sec, key))
        except ValueError as exc:
            fail(f"{sec}.{key}: {exc}", sec, key)
    problem = ProblemConfig(grid, built["p"], built["q"], built["mu"], nl, direction)

    solver_kwargs = {}
    types = {f.name: f.type for f in dc_fields(SolverConfig)}
    for key, raw in (parser["solver"].items() if parser.has_section("solver") else []):
        conv = types[key] if types[key] in (int, float) else str
        try:
            solver_kwargs[key] = conv(raw) if raw.lower() != "none" else None
        except ValueError as exc:
            fail(f"bad value for solver.{key}: {exc}", "solver", key)
    try:
        solver = SolverConfig(**solver_kwargs)
    except (ValueError, TypeError) as exc:
        fail(str(exc), "solver")

    options = {sec: dict(parser[sec]) for sec in parser.sections()
               if sec in ("output", "fibering", "geometry", "sweep")}
    options["_lines"] = lines
    return RunConfig(problem, solver, options, text, path)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path)
