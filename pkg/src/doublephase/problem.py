"""Problem data: coefficient expressions, exponent and weight fields,
nonlinearity families and the bundled problem configuration."""

import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .mesh import Grid

__all__ = [
    "Expr",
    "ExponentField",
    "WeightField",
    "NonlinearitySpec",
    "ProblemConfig",
    "FAMILIES",
]


_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM = re.compile(
    rf"^(?:(?P<coef>{_NUM})\s*\*?\s*)?"
    rf"(?:(?P<var>x(?P<axis>\d))"
    rf"|sin\(\s*(?:(?P<k>{_NUM})\s*\*\s*)?pi\s*\*\s*x(?P<saxis>\d)\s*\))?$"
)


class Expr:
    """Affine-plus-sine coefficient ``a + b*x1 + c*x2 + d*sin(k*pi*x1)``.

    Any number of terms is accepted; each term is a constant, ``c*xi`` or
    ``d*sin(k*pi*xi)`` (coefficients and ``k`` optional).
    """

    def __init__(self, text):
        if isinstance(text, (int, float, np.floating, np.integer)):
            text = repr(float(text))
        self.text = str(text).strip()
        self.terms = self._parse(self.text)

    @staticmethod
    def _parse(text):
        if not text:
            raise ValueError("empty expression")
        src = text.replace(" ", "")
        # split on +/- that are not part of an exponent
        pieces = re.split(r"(?<![eE(*])(?=[+-])", src)
        terms = []
        for piece in pieces:
            if not piece:
                continue
            sign = 1.0
            while piece and piece[0] in "+-":
                sign = -sign if piece[0] == "-" else sign
                piece = piece[1:]
            m = _TERM.match(piece)
            if not m or not piece:
                raise ValueError(f"cannot parse term {piece!r} in {text!r}")
            coef = sign * float(m.group("coef") or 1.0)
            if m.group("var"):
                terms.append(("lin", coef, int(m.group("axis")) - 1, 0.0))
            elif m.group("saxis"):
                k = float(m.group("k") or 1.0)
                terms.append(("sin", coef, int(m.group("saxis")) - 1, k))
            else:
                if m.group("coef") is None:
                    raise ValueError(f"cannot parse term {piece!r} in {text!r}")
                terms.append(("const", coef, -1, 0.0))
        return terms

    @property
    def is_constant(self):
        return all(kind == "const" for kind, *_ in self.terms)

    @property
    def max_axis(self):
        return max((ax for _, _, ax, _ in self.terms), default=-1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for kind, coef, ax, k in self.terms:
            if kind == "const":
                out = out + coef
            elif kind == "lin":
                out = out + coef * x[..., ax]
            else:
                out = out + coef * np.sin(k * np.pi * x[..., ax])
        return out

    def __repr__(self):
        return f"Expr({self.text!r})"

    def __str__(self):
        return self.text


def _as_expr(e):
    return e if isinstance(e, Expr) else Expr(e)


class _NodalField:
    def __init__(self, grid, values, expr=None):
        vals = np.array(np.broadcast_to(np.asarray(values, dtype=float), grid.counts))
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals
        self.expr = expr

    @classmethod
    def from_expr(cls, grid, expr):
        expr = _as_expr(expr)
        if expr.max_axis >= grid.dim:
            raise ValueError(f"{expr} uses x{expr.max_axis + 1} on a {grid.dim}-D grid")
        return cls(grid, expr(grid.nodes), expr)

    @classmethod
    def constant(cls, grid, c):
        return cls.from_expr(grid, Expr(c))

    @cached_property
    def minus(self):
        return float(self.values.min())

    @cached_property
    def plus(self):
        return float(self.values.max())

    @cached_property
    def cells(self):
        """Midpoint values (corner averages)."""
        return self.grid.averaging_matrix @ self.values.ravel()

    def __str__(self):
        return str(self.expr) if self.expr is not None else f"<{type(self).__name__}>"


class ExponentField(_NodalField):
    """Nodal variable exponent; ``minus``/``plus`` are its min and max."""

    def __init__(self, grid, values, expr=None):
        super().__init__(grid, values, expr)
        # +inf is allowed: it marks critical exponents where p(x) >= N
        if np.any(np.isnan(self.values)) or np.any(self.values <= 1.0):
            raise ValueError("exponent values must be > 1")


class WeightField(_NodalField):
    def __init__(self, grid, values, expr=None):
        super().__init__(grid, values, expr)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0.0):
            raise ValueError("weight values must be finite and >= 0")


# family -> required parameter names (optional ones carry defaults)
FAMILIES = {
    "pure-power": {"r": None, "c": "1"},
    "power-sum": {"r1": None, "r2": None, "c1": "1", "c2": "1"},
    "log-example": {"r1": None, "r2": None, "a": None, "eps": "0.01"},
}
# accepted spellings of the family tags
ALIASES = {"paper-log-example": "log-example"}


def _pow_signed(t, r):
    """|t|**(r-1) * sign(t), safe at t = 0."""
    return np.sign(t) * np.abs(t) ** (r - 1.0)


class NonlinearitySpec:
    """Right-hand side f(x, t) with closed-form primitive F(x, t).

    Families
    --------
    ``pure-power``   f = c |t|^(r-2) t
    ``power-sum``    f = c1 |t|^(r1-2) t + c2 |t|^(r2-2) t
    ``log-example``
        f = |t|^(r1-2) t (1 + log(-t))  for t <= -1,
            |t|^(a-2) t                 for |t| < 1,
            |t|^(r2-2) t (1 + log t)    for t >= 1.
    """

    def __init__(self, family, **params):
        family = ALIASES.get(family, family)
        if family not in FAMILIES:
            raise ValueError(f"unknown nonlinearity family {family!r}; "
                             f"choose from {sorted(FAMILIES)}")
        schema = FAMILIES[family]
        unknown = set(params) - set(schema)
        if unknown:
            raise ValueError(f"unknown parameters for {family}: {sorted(unknown)}")
        resolved = {}
        for name, default in schema.items():
            if name in params:
                resolved[name] = _as_expr(params[name])
            elif default is not None:
                resolved[name] = Expr(default)
            else:
                raise ValueError(f"{family} requires parameter {name!r}")
        self.family = family
        self.params = resolved

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"NonlinearitySpec({self.family!r}, {args})"

    def _p(self, name, x):
        return self.params[name](x)

    def f(self, x, t):
        t = np.asarray(t, dtype=float)
        if self.family == "pure-power":
            return self._p("c", x) * _pow_signed(t, self._p("r", x))
        if self.family == "power-sum":
            return (self._p("c1", x) * _pow_signed(t, self._p("r1", x))
                    + self._p("c2", x) * _pow_signed(t, self._p("r2", x)))
        r1, r2, a = self._p("r1", x), self._p("r2", x), self._p("a", x)
        at = np.abs(t)
        logt = np.log(np.maximum(at, 1.0))
        return np.where(
            t <= -1.0, _pow_signed(t, r1) * (1.0 + logt),
            np.where(t >= 1.0, _pow_signed(t, r2) * (1.0 + logt),
                     _pow_signed(t, a)))

    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        at = np.abs(t)
        if self.family == "pure-power":
            r = self._p("r", x)
            return self._p("c", x) * at ** r / r
        if self.family == "power-sum":
            r1, r2 = self._p("r1", x), self._p("r2", x)
            return (self._p("c1", x) * at ** r1 / r1
                    + self._p("c2", x) * at ** r2 / r2)
        r1, r2, a = self._p("r1", x), self._p("r2", x), self._p("a", x)
        r = np.where(t < 0.0, r1, r2)
        s = np.maximum(at, 1.0)
        logs = np.log(s)
        sr = s ** r
        outer = 1.0 / a + (sr - 1.0) / r + sr * logs / r - (sr - 1.0) / r ** 2
        return np.where(at >= 1.0, outer, at ** a / a)

    def growth_exponent(self, x):
        """Exponent r(x) with |f(x,t)| <= C (1 + |t|^(r(x)-1))."""
        if self.family == "pure-power":
            return self._p("r", x)
        if self.family == "power-sum":
            return np.maximum(self._p("r1", x), self._p("r2", x))
        return np.maximum(self._p("r1", x), self._p("r2", x)) + self._p("eps", x)

    def cerami_exponents(self, x):
        """Natural exponents (l, l~) at +inf / -inf, when the family has them."""
        if self.family == "log-example":
            return self._p("r2", x), self._p("r1", x)
        return None

    def is_odd(self):
        """True when f(x, -t) = -f(x, t) identically."""
        if self.family == "log-example":
            return self.params["r1"].text == self.params["r2"].text
        return True

    def is_x_independent(self):
        return all(e.is_constant for e in self.params.values())


@dataclass
class ProblemConfig:
    """Grid, exponents p and q, weight mu, direction l and nonlinearity."""

    grid: Grid
    p: ExponentField
    q: ExponentField
    mu: WeightField
    nonlinearity: NonlinearitySpec
    direction: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.direction is None:
            self.direction = (1.0,) + (0.0,) * (self.grid.dim - 1)
        self.direction = tuple(float(v) for v in self.direction)
        for name in ("p", "q", "mu"):
            if getattr(self, name).grid != self.grid:
                raise ValueError(f"{name} lives on a different grid")

    @property
    def dim(self):
        return self.grid.dim

    @classmethod
    def build(cls, grid, p, q, mu, nonlinearity, direction=None):
        """Construct from expressions (strings/numbers) or ready-made fields."""
        if not isinstance(p, ExponentField):
            p = ExponentField.from_expr(grid, p)
        if not isinstance(q, ExponentField):
            q = ExponentField.from_expr(grid, q)
        if not isinstance(mu, WeightField):
            mu = WeightField.from_expr(grid, mu)
        return cls(grid, p, q, mu, nonlinearity, direction)

    def on_grid(self, grid):
        """Same problem data re-sampled on another grid (expressions required)."""
        return ProblemConfig.build(grid, self.p.expr, self.q.expr, self.mu.expr,
                                   self.nonlinearity, self.direction)

    @cached_property
    def cell_data(self):
        """Cell-midpoint exponents, weight and coordinates."""
        return (self.p.cells, self.q.cells, self.mu.cells,
                self.grid.cell_centers.reshape(-1, self.dim))
