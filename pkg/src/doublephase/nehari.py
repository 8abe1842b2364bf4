"""Fibering maps and projections onto the Nehari set and its nodal subset.

Along a ray t -> t*u the energy only needs the per-cell gradient norms and
cell averages of u, so :class:`FiberMap` precomputes them once and every
evaluation of k_u(t) = phi(t u) or k_u'(t) is a cheap vector expression.
The root of k_u' is found by bisection on k_u'(t) / t^(q_+ - 1), which is
strictly decreasing under the quotient monotonicity hypothesis on f.
"""

from dataclasses import dataclass, field

import numpy as np

from .energy import energy_phi, flux_kernel, residual, pairing
from .mesh import gradient, truncate

__all__ = [
    "NehariError",
    "NehariBracketError",
    "PairConvergenceError",
    "NehariState",
    "FiberMap",
    "PairMap",
    "fibering",
    "fibering_profile",
    "project_ray",
    "project_pair",
    "write_profile_csv",
]


class NehariError(RuntimeError):
    pass


class NehariBracketError(NehariError):
    """``nehari_bracket_failure``: k_u' has no sign change on the search range."""

    code = "nehari_bracket_failure"


class PairConvergenceError(NehariError):
    code = "pair_projection_failure"

    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = residuals


def _trunc(a, which):
    if which == "plus":
        return np.maximum(a, 0.0)
    if which == "minus":
        return np.minimum(a, 0.0)
    return a


class FiberMap:
    """k(t) = phi_which(t u) and its derivative for a fixed field u."""

    def __init__(self, cfg, u, which="phi"):
        if u.max_abs() == 0.0:
            raise ValueError("fibering map needs u != 0")
        self.cfg = cfg
        self.which = which
        p, q, mu, xc = cfg.cell_data
        qf = gradient(u)
        self.dx = cfg.grid.cell_measure
        self.p, self.q, self.mu, self.xc = p, q, mu, xc
        self.gn = qf.grad_norm
        self.a = _trunc(qf.values, which)
        self.gp = self.gn ** p
        self.gq = mu * self.gn ** q
        self.q_plus = cfg.q.plus
        self.nl = cfg.nonlinearity

    def k(self, t):
        t = float(t)
        if t == 0.0:
            return 0.0
        I = np.sum(t ** self.p * self.gp / self.p + t ** self.q * self.gq / self.q)
        return float((I - np.sum(self.nl.F(self.xc, t * self.a))) * self.dx)

    def kprime(self, t):
        t = float(t)
        I = np.sum(t ** (self.p - 1.0) * self.gp + t ** (self.q - 1.0) * self.gq)
        return float((I - np.dot(self.nl.f(self.xc, t * self.a), self.a)) * self.dx)

    def reduced(self, t):
        """k'(t) / t^(q_+ - 1); strictly decreasing in t."""
        t = float(t)
        e = self.q_plus - 1.0
        I = np.sum(t ** (self.p - 1.0 - e) * self.gp + t ** (self.q - 1.0 - e) * self.gq)
        return float((I - np.dot(self.nl.f(self.xc, t * self.a), self.a) / t ** e) * self.dx)

    def root(self, t0=1.0, max_expand=100, rtol=1e-13):
        """Unique zero of k' on (0, inf)."""
        lo = hi = float(t0)
        glo = ghi = self.reduced(lo)
        n = 0
        while glo <= 0.0:
            if n >= max_expand:
                raise NehariBracketError(
                    f"nehari_bracket_failure: k' <= 0 down to t={lo:.3e}")
            hi, ghi = lo, glo
            lo *= 0.5
            glo = self.reduced(lo)
            n += 1
        n = 0
        while ghi > 0.0:
            if n >= max_expand:
                raise NehariBracketError(
                    f"nehari_bracket_failure: k' > 0 up to t={hi:.3e}")
            lo, glo = hi, ghi
            hi *= 2.0
            ghi = self.reduced(hi)
            n += 1
        if ghi == 0.0:
            return hi
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            gm = self.reduced(mid)
            if gm > 0.0:
                lo = mid
            elif gm < 0.0:
                hi = mid
            else:
                return mid
        return 0.5 * (lo + hi)


def fibering(cfg, u, t, which="phi"):
    """(k_u(t), k_u'(t)) through the assembled energy and residual."""
    tu = t * u
    k = energy_phi(cfg, tu).total(which)
    kp = pairing(residual(cfg, tu, which), u)
    return k, kp


def fibering_profile(cfg, u, t_grid, which="phi"):
    """Rows (t, k(t), k'(t)) for t in ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be positive and increasing")
    fm = FiberMap(cfg, u, which)
    return np.array([(t, fm.k(t), fm.kprime(t)) for t in t_grid])


def write_profile_csv(rows, path):
    np.savetxt(path, np.asarray(rows), delimiter=",", header="t,k,kprime",
               comments="", fmt="%.17g")


def project_ray(cfg, u, which="phi", t0=1.0):
    """The unique t_u > 0 with <phi'(t_u u), u> = 0."""
    return FiberMap(cfg, u, which).root(t0)


class PairMap:
    """Coupled fibering equations for W = s w^+ - t w^-."""

    def __init__(self, cfg, w):
        self.cfg = cfg
        wp, wm = truncate(w, "+"), truncate(w, "-")
        if wp.max_abs() == 0.0 or wm.max_abs() == 0.0:
            raise ValueError("pair projection needs w^+ != 0 != w^-")
        self.wp, self.wm = wp, wm
        p, q, mu, xc = cfg.cell_data
        self.p, self.q, self.mu, self.xc = p, q, mu, xc
        qp, qm = gradient(wp), gradient(wm)
        self.gp, self.gm = qp.gradients, qm.gradients
        self.ap, self.am = qp.values, qm.values
        self.dx = cfg.grid.cell_measure
        self.nl = cfg.nonlinearity
        self.q_plus = cfg.q.plus
        # cells touched by both parts
        self.shared = (np.any(self.gp != 0, axis=1) | (self.ap != 0)) & \
                      (np.any(self.gm != 0, axis=1) | (self.am != 0))

    def field(self, s, t):
        return s * self.wp - t * self.wm

    def residuals(self, s, t):
        """(<phi'(W), w^+>, <phi'(W), -w^->)."""
        g = s * self.gp - t * self.gm
        a = s * self.ap - t * self.am
        k = flux_kernel(np.sqrt(np.sum(g * g, axis=1)), self.p, self.q, self.mu)
        fl = self.nl.f(self.xc, a)
        rp = np.sum(k * np.sum(g * self.gp, axis=1)) - np.dot(fl, self.ap)
        rm = -np.sum(k * np.sum(g * self.gm, axis=1)) + np.dot(fl, self.am)
        return float(rp * self.dx), float(rm * self.dx)

    def scale(self, s, t):
        return energy_phi(self.cfg, self.field(s, t)).scale("phi")

    def _solve_scalar(self, func, x0, max_expand=100, rtol=1e-13):
        """Root of func(x)/x^(q_+-1) (decreasing) bracketed around x0."""
        e = self.q_plus - 1.0

        def red(x):
            return func(x) / x ** e

        lo = hi = float(x0)
        glo = ghi = red(lo)
        n = 0
        while glo <= 0.0:
            if n >= max_expand:
                raise NehariBracketError("nehari_bracket_failure in pair solve")
            hi, ghi = lo, glo
            lo *= 0.5
            glo = red(lo)
            n += 1
        n = 0
        while ghi > 0.0:
            if n >= max_expand:
                raise NehariBracketError("nehari_bracket_failure in pair solve")
            lo, glo = hi, ghi
            hi *= 2.0
            ghi = red(hi)
            n += 1
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            gm = red(mid)
            if gm > 0.0:
                lo = mid
            elif gm < 0.0:
                hi = mid
            else:
                return mid
        return 0.5 * (lo + hi)


@dataclass
class NehariState:
    base: object
    t_u: float = None
    pair: tuple = None
    residual_whole: float = None
    residual_plus: float = None
    residual_minus: float = None
    scale: float = None
    sweeps: int = 0
    history: list = field(default_factory=list)

    @property
    def projected(self):
        if self.pair is not None:
            s, t = self.pair
            return s * truncate(self.base, "+") - t * truncate(self.base, "-")
        return self.t_u * self.base


def project_pair(cfg, w, tol=1e-8, max_sweeps=500, start=None):
    """Scalings (s, t) with s w^+ - t w^- in the nodal Nehari set.

    Alternates the two scalar fibering equations (Gauss-Seidel), starting
    from the decoupled ray projections of w^+ and -w^- unless ``start`` is
    given.  Convergence: |<phi'(W), +-W^+->| <= tol * scale(W).
    """
    pm = PairMap(cfg, w)
    if start is None:
        s = project_ray(cfg, pm.wp)
        t = project_ray(cfg, -pm.wm)
    else:
        s, t = start
    state = NehariState(base=w)
    r_init = None
    for sweep in range(max_sweeps + 1):
        rp, rm = pm.residuals(s, t)
        scale = pm.scale(s, t)
        state.history.append((s, t, rp * s, rm * t))
        if r_init is None:
            r_init = (abs(rp * s), abs(rm * t))
        if abs(rp * s) <= tol * scale and abs(rm * t) <= tol * scale:
            break
        if sweep == max_sweeps:
            raise PairConvergenceError(
                f"pair projection did not converge in {max_sweeps} sweeps "
                f"(residuals {rp * s:.3e}, {rm * t:.3e}, scale {scale:.3e})",
                (rp * s, rm * t))
        s = pm._solve_scalar(lambda x: pm.residuals(x, t)[0], s)
        t = pm._solve_scalar(lambda y: pm.residuals(s, y)[1], t)
    state.pair = (s, t)
    state.residual_plus = rp * s
    state.residual_minus = rm * t
    state.residual_whole = state.residual_plus + state.residual_minus
    state.scale = scale
    state.sweeps = sweep
    state.initial_residuals = r_init
    return state
