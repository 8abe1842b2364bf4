"""Modulars and Luxemburg norms for variable-exponent and double phase integrands.

Value modulars integrate the cell-averaged |u|, gradient modulars the
midpoint |grad u|; both use the same one-point quadrature as the energy.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mesh import CorruptFieldError, gradient
from .problem import ExponentField, WeightField

__all__ = [
    "ModularSpec",
    "LuxemburgError",
    "LuxemburgResult",
    "modular",
    "luxemburg",
    "luxemburg_norm",
    "norm_modular_relations",
    "SobolevNorms",
    "sobolev_norms",
    "poincare_diagnostic",
    "KINDS",
]

KINDS = ("var-exp", "weighted", "double-phase")

# modular values below this are treated as an exactly zero field
ZERO_MODULAR = 1e-300


class LuxemburgError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModularSpec:
    """rho(u) = int |v|^r, int w |v|^r, or int |v|^p + mu |v|^q, with v = u or |grad u|."""

    kind: str
    exponent: ExponentField
    weight: WeightField = None
    exponent2: ExponentField = None
    gradient: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind in ("weighted", "double-phase") and self.weight is None:
            raise ValueError(f"{self.kind} modular needs a weight")
        if self.kind == "double-phase" and self.exponent2 is None:
            raise ValueError("double-phase modular needs a second exponent")

    @classmethod
    def var_exp(cls, r, gradient=False):
        return cls("var-exp", r, gradient=gradient)

    @classmethod
    def weighted(cls, r, w, gradient=False):
        return cls("weighted", r, w, gradient=gradient)

    @classmethod
    def double_phase(cls, p, q, mu, gradient=False):
        return cls("double-phase", p, mu, q, gradient)

    @classmethod
    def from_config(cls, cfg, gradient=False):
        return cls.double_phase(cfg.p, cfg.q, cfg.mu, gradient)

    @property
    def grid(self):
        return self.exponent.grid

    @property
    def exponent_range(self):
        """(min, max) exponents entering the norm-modular sandwich."""
        if self.kind == "double-phase":
            return self.exponent.minus, self.exponent2.plus
        return self.exponent.minus, self.exponent.plus

    def integrand_data(self, u):
        """Per-cell |v|, exponents and weight as flat arrays."""
        if u.grid != self.grid:
            raise ValueError("field and modular live on different grids")
        if not np.all(np.isfinite(u.values)):
            raise CorruptFieldError("field contains non-finite values")
        qf = gradient(u)
        a = qf.grad_norm if self.gradient else np.abs(qf.values)
        w = self.weight.cells if self.weight is not None else None
        r2 = self.exponent2.cells if self.exponent2 is not None else None
        return a, self.exponent.cells, r2, w


class _Evaluator:
    """lam -> rho(u / lam) with per-cell data cached."""

    def __init__(self, spec, u):
        self.kind = spec.kind
        self.a, self.r, self.r2, self.w = spec.integrand_data(u)
        self.dx = spec.grid.cell_measure

    def parts(self, lam=1.0):
        b = self.a / lam
        first = np.sum(b ** self.r) * self.dx
        if self.kind == "var-exp":
            return float(first), 0.0
        if self.kind == "weighted":
            return float(np.sum(self.w * b ** self.r) * self.dx), 0.0
        return float(first), float(np.sum(self.w * b ** self.r2) * self.dx)

    def __call__(self, lam=1.0):
        return sum(self.parts(lam))


def modular(spec, u):
    return _Evaluator(spec, u)()


class LuxemburgResult(NamedTuple):
    norm: float
    iterations: int
    seminorm_degenerate: bool = False


def luxemburg(spec, u, rtol=1e-10, max_iter=200):
    """Luxemburg norm with diagnostics.

    Brackets the crossing of rho(u/lam) = 1 from lam = 1 by doubling or
    halving, then bisects.  Bisection continues past ``rtol`` down to
    machine resolution as long as the iteration cap allows, so that the
    norm-modular identities can be checked at roundoff level.
    """
    ev = _Evaluator(spec, u)
    if not np.any(ev.a > 0.0):
        return LuxemburgResult(0.0, 0)
    m1 = ev(1.0)
    if m1 < ZERO_MODULAR:
        # nonzero data but zero integrand: support inside {weight = 0}
        return LuxemburgResult(0.0, 0, seminorm_degenerate=spec.kind != "var-exp")
    if m1 == 1.0:
        return LuxemburgResult(1.0, 0)
    lo = hi = 1.0
    if m1 > 1.0:
        while ev(hi) > 1.0:
            lo, hi = hi, 2.0 * hi
            if not np.isfinite(hi):
                raise LuxemburgError("bracket expansion overflowed")
    else:
        while ev(lo) < 1.0:
            lo, hi = 0.5 * lo, lo
            if lo == 0.0:
                raise LuxemburgError("bracket contraction underflowed")
    n = 0
    while n < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        m = ev(mid)
        n += 1
        if m > 1.0:
            lo = mid
        elif m < 1.0:
            hi = mid
        else:
            return LuxemburgResult(mid, n)
    if hi - lo > rtol * hi:
        raise LuxemburgError(f"no convergence in {max_iter} bisection steps")
    return LuxemburgResult(0.5 * (lo + hi), n)


def luxemburg_norm(spec, u, rtol=1e-10):
    return luxemburg(spec, u, rtol).norm


# relative slack for the sandwich inequalities: a few ulps of the powers
_ROUND = 64 * np.finfo(float).eps


def norm_modular_relations(spec, u, scales=None, limits=True):
    """Verdicts (True/False) for the six norm-modular relations.

    i    rho(u / ||u||) = 1 (u != 0)
    ii   ||u|| <, =, > 1 exactly when rho(u) <, =, > 1
    iii  ||u||^r+ <= rho(u) <= ||u||^r- when ||u|| < 1
    iv   ||u||^r- <= rho(u) <= ||u||^r+ when ||u|| > 1
    v    s -> 0 drives norm and modular to 0 together
    vi   s -> inf drives both to infinity together

    For the double phase modular r- = p_- and r+ = q_+.  Items iii/iv are
    vacuous (True) outside their regime; v/vi are skipped (None) when
    ``limits`` is false.  Returns a dict with the verdicts
    and the evaluated quantities.
    """
    lux = luxemburg(spec, u)
    lam = lux.norm
    rho = modular(spec, u)
    r_lo, r_hi = spec.exponent_range
    out = {"norm": lam, "modular": rho, "r_minus": r_lo, "r_plus": r_hi}
    if lam == 0.0:
        out.update(i=True, ii=rho < 1.0, iii=True, iv=True, v=True, vi=True)
        return out
    out["modular_at_norm"] = modular_at = _Evaluator(spec, u)(lam)
    out["i"] = abs(modular_at - 1.0) <= 1e-8

    # regime classification; within roundoff of 1 both must agree on ~1
    near_one = abs(lam - 1.0) <= 1e-9 or abs(rho - 1.0) <= 1e-8
    if near_one:
        out["ii"] = abs(lam - 1.0) <= 1e-8 * max(r_hi, 1.0) and abs(rho - 1.0) <= 1e-7 * r_hi
    else:
        out["ii"] = (lam < 1.0) == (rho < 1.0)

    lo_pow, hi_pow = lam ** r_hi, lam ** r_lo
    slack = _ROUND * r_hi
    if lam < 1.0:
        out["iii"] = lo_pow * (1 - slack) <= rho <= hi_pow * (1 + slack)
    else:
        out["iii"] = True
    if lam > 1.0:
        out["iv"] = hi_pow * (1 - slack) <= rho <= lo_pow * (1 + slack)
    else:
        out["iv"] = True

    if not limits:
        out["v"] = out["vi"] = None
        return out
    if scales is None:
        scales = 2.0 ** np.arange(1, 41, 8)
    small = [(luxemburg_norm(spec, u / s), modular(spec, u / s)) for s in scales]
    big = [(luxemburg_norm(spec, u * s), modular(spec, u * s)) for s in scales]
    n_small, m_small = np.array(small).T
    n_big, m_big = np.array(big).T
    out["v"] = bool(np.all(np.diff(n_small) < 0) and np.all(np.diff(m_small) < 0)
                    and n_small[-1] < 1e-6 * lam and m_small[-1] < 1e-6 * max(rho, 1e-300))
    out["vi"] = bool(np.all(np.diff(n_big) > 0) and np.all(np.diff(m_big) > 0)
                     and n_big[-1] > 1e6 * lam and m_big[-1] > 1e6 * rho)
    return out


class SobolevNorms(NamedTuple):
    full: float  # ||u||_H + ||grad u||_H
    zero: float  # ||grad u||_H
    grad: float
    value: float


def sobolev_norms(cfg, u):
    """(||u||_{1,H}, ||u||_{1,H,0}, ||grad u||_H, ||u||_H)."""
    g = luxemburg_norm(ModularSpec.from_config(cfg, gradient=True), u)
    v = luxemburg_norm(ModularSpec.from_config(cfg, gradient=False), u)
    return SobolevNorms(v + g, g, g, v)


def poincare_diagnostic(cfg, sample_fields):
    """max rho_p(u)/rho_p(grad u) and max ||u||_H/||grad u||_H over samples."""
    rp = ModularSpec.var_exp(cfg.p)
    rpg = ModularSpec.var_exp(cfg.p, gradient=True)
    mod_ratio = norm_ratio = 0.0
    for u in sample_fields:
        if u.max_abs() == 0.0:
            raise ValueError("sample fields must be nonzero")
        den = modular(rpg, u)
        if den == 0.0:
            raise RuntimeError("internal error: nonzero Dirichlet field with zero gradient")
        mod_ratio = max(mod_ratio, modular(rp, u) / den)
        n = sobolev_norms(cfg, u)
        norm_ratio = max(norm_ratio, n.value / n.grad)
    return mod_ratio, norm_ratio
