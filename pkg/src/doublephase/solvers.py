"""Projected descent for the positive, negative and sign-changing solutions.

Each iteration takes a Laplacian-preconditioned step along the negative
residual and maps the trial field back to the Nehari set (ray projection
for the constant-sign solutions, pair projection for the nodal one).  Step
sizes are chosen by Armijo backtracking on the projected energy, so the
energy is non-increasing over accepted iterations.

Stopping uses the dual norm of the residual, ||r||_* = sqrt(r^T K^{-1} r)
with K the constant-coefficient stiffness matrix, made relative to the
energy scale divided by ||grad u||_2 (the ratio is dimensionless).
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse.linalg as spla

from .energy import energy_phi, residual, pairing
from .mesh import connected_components, gradient, truncate
from .modulars import ModularSpec, luxemburg_norm, sobolev_norms
from .nehari import NehariError, project_pair, project_ray
from .problem import ExponentField

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolverError",
    "SignViolationError",
    "NodalCollapseError",
    "initial_guess",
    "random_smooth_field",
    "solve_constant_sign",
    "solve_sign_changing",
    "solve_all",
    "GeometryReport",
    "mountain_pass_geometry",
    "coercivity_profile",
    "linf_diagnostic",
    "weak_form_defect",
    "dual_norm",
]

GUESSES = ("bump", "bump-pair", "bump-pair-x2")


class SolverError(RuntimeError):
    code = "solver_failure"


class SignViolationError(SolverError):
    code = "sign_violation"


class NodalCollapseError(SolverError):
    code = "nodal_collapse"


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 2000
    tol: float = 1e-6
    step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    preconditioner: str = "laplacian"
    initial_guess: str = None
    seed: int = 0
    max_restarts: int = 3
    pair_tol: float = 1e-8
    regularization: float = 0.0

    def __post_init__(self):
        if not (self.tol > 0 and self.step > 0 and self.armijo > 0):
            raise ValueError("tolerances and step sizes must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in ("laplacian", "identity"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.initial_guess is not None and self.initial_guess not in GUESSES:
            raise ValueError(f"initial_guess must be one of {GUESSES}")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")


# ---------------------------------------------------------------------------
# fields


def _unit_coords(grid):
    return grid.nodes / np.asarray(grid.extents)


def initial_guess(grid, name):
    """Deterministic start fields on the box, scaled to unit coordinates."""
    y = _unit_coords(grid)
    rest = np.prod(np.sin(np.pi * y[..., 2:]), axis=-1)
    if name == "bump":
        v = np.sin(np.pi * y[..., 0]) * np.sin(np.pi * y[..., 1])
    elif name == "bump-pair":
        v = np.sin(2 * np.pi * y[..., 0]) * np.sin(np.pi * y[..., 1])
    elif name == "bump-pair-x2":
        v = np.sin(np.pi * y[..., 0]) * np.sin(2 * np.pi * y[..., 1])
    else:
        raise ValueError(f"unknown initial guess {name!r}; choose from {GUESSES}")
    return grid.field(v * rest).with_zero_boundary()


def random_smooth_field(grid, rng, modes=4):
    """Random combination of the first ``modes``^N Dirichlet sine modes."""
    y = _unit_coords(grid)
    out = np.zeros(grid.counts)
    for ks in np.ndindex(*(modes,) * grid.dim):
        c = rng.standard_normal() / (1.0 + sum(ks))
        term = np.ones(grid.counts)
        for ax, k in enumerate(ks):
            term = term * np.sin((k + 1) * np.pi * y[..., ax])
        out += c * term
    return grid.field(out).with_zero_boundary()


@lru_cache(maxsize=8)
def _stiffness_lu(grid):
    idx = grid.interior_index
    return spla.splu(grid.stiffness[idx][:, idx].tocsc())


def dual_norm(rv):
    """sqrt(r^T K^{-1} r) over interior nodes."""
    ri = rv.flat[rv.grid.interior_index]
    return float(np.sqrt(max(ri @ _stiffness_lu(rv.grid).solve(ri), 0.0)))


def _l2_grad(u):
    return float(np.sqrt(np.sum(gradient(u).grad_norm ** 2) * u.grid.cell_measure))


# ---------------------------------------------------------------------------
# reports


@dataclass
class SolveReport:
    kind: str
    field: object
    converged: bool
    iterations: int
    dual_residual: float
    relative_residual: float
    tol: float
    functional: str
    energy: object
    nehari_whole: float
    nehari_plus: float = None
    nehari_minus: float = None
    components: tuple = (0, 0)
    norm: float = 0.0
    norm_plus: float = 0.0
    norm_minus: float = 0.0
    linf: tuple = None
    initial_guess: str = ""
    seed: int = 0
    restarts: int = 0
    stop_reason: str = ""
    history: list = field(default_factory=list, repr=False)
    geometry: object = None
    hypotheses: object = None

    @property
    def energy_value(self):
        return self.energy.total(self.functional)

    @property
    def scale(self):
        return self.energy.scale(self.functional)

    def to_text(self):
        e = self.energy
        rows = [
            f"[{self.kind}]",
            f"converged={str(self.converged).lower()}",
            f"stop_reason={self.stop_reason}",
            f"iterations={self.iterations}",
            f"functional={self.functional}",
            f"dual_residual={self.dual_residual:.10e}",
            f"relative_residual={self.relative_residual:.10e}",
            f"tolerance={self.tol:.3e}",
            f"energy={self.energy_value:.15g}",
            f"phi={e.phi:.15g}",
            f"phi_plus={e.phi_plus:.15g}",
            f"phi_minus={e.phi_minus:.15g}",
            f"I_p={e.I_p:.15g}",
            f"I_q={e.I_q:.15g}",
            f"F_term={e.F_term:.15g}",
            f"scale={self.scale:.15g}",
            f"nehari_whole={self.nehari_whole:.6e}",
        ]
        if self.nehari_plus is not None:
            rows.append(f"nehari_plus={self.nehari_plus:.6e}")
            rows.append(f"nehari_minus={self.nehari_minus:.6e}")
        u = self.field
        rows += [
            f"min={u.values.min():.15g}",
            f"max={u.values.max():.15g}",
            f"norm_1H0={self.norm:.15g}",
            f"norm_plus_1H0={self.norm_plus:.15g}",
            f"norm_minus_1H0={self.norm_minus:.15g}",
            f"components_positive={self.components[0]}",
            f"components_negative={self.components[1]}",
            f"nodal_domains={self.components[0] + self.components[1]}",
        ]
        if self.linf is not None:
            rows += [f"linf={self.linf[0]:.15g}", f"lr_norm={self.linf[1]:.15g}",
                     f"log_ratio={self.linf[2]:.15g}"]
        rows += [f"initial_guess={self.initial_guess}", f"seed={self.seed}",
                 f"restarts={self.restarts}"]
        return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# descent


def _descent(cfg, scfg, u0, which, project):
    grid = cfg.grid
    idx = grid.interior_index
    lu = _stiffness_lu(grid)

    def energy(v):
        return energy_phi(cfg, v).total(which)

    u = project(u0)
    E = energy(u)
    history = [E]
    alpha = scfg.step
    reason = "max_iter"
    for it in range(scfg.max_iter + 1):
        ri = residual(cfg, u, which).flat[idx]
        dual = float(np.sqrt(max(ri @ lu.solve(ri), 0.0)))
        rel = dual * _l2_grad(u) / energy_phi(cfg, u).scale(which)
        if rel <= scfg.tol:
            reason = "converged"
            break
        if it == scfg.max_iter:
            break
        if scfg.regularization > 0:
            eps = scfg.regularization * u.max_abs()
            ri_step = residual(cfg, u, which, eps=eps).flat[idx]
        else:
            ri_step = ri
        d = np.zeros(grid.num_nodes)
        d[idx] = lu.solve(ri_step) if scfg.preconditioner == "laplacian" else ri_step
        slope = float(ri @ d[idx])
        if slope <= 0:
            reason = "not_a_descent_direction"
            break
        step = grid.field(d.reshape(grid.counts))
        alpha = min(alpha / scfg.shrink, scfg.step)
        for _ in range(scfg.max_backtracks):
            try:
                trial = project(u - alpha * step)
                E_trial = energy(trial)
            except (NehariError, ValueError, FloatingPointError):
                E_trial = np.inf
            if E_trial <= E - scfg.armijo * alpha * slope:
                break
            alpha *= scfg.shrink
        else:
            reason = "line_search_failure"
            break
        u, E = trial, E_trial
        history.append(E)
    return u, it, dual, rel, reason == "converged", reason, history


def _finish(cfg, scfg, kind, u, which, result, guess, restarts):
    _, it, dual, rel, conv, reason, history = result
    e = energy_phi(cfg, u)
    rv = residual(cfg, u, which)
    norms = sobolev_norms(cfg, u)
    up, um = truncate(u, "+"), truncate(u, "-")
    comp = connected_components(u)
    rep = SolveReport(
        kind=kind, field=u, converged=conv, iterations=it, dual_residual=dual,
        relative_residual=rel, tol=scfg.tol, functional=which, energy=e,
        nehari_whole=pairing(rv, u), components=(comp.positive, comp.negative),
        norm=norms.zero, norm_plus=sobolev_norms(cfg, up).zero,
        norm_minus=sobolev_norms(cfg, um).zero, linf=linf_diagnostic(cfg, u),
        initial_guess=guess, seed=scfg.seed, restarts=restarts, stop_reason=reason,
        history=history)
    if kind == "sign-changing":
        rep.nehari_plus = pairing(rv, up)
        rep.nehari_minus = pairing(rv, -um)
    return rep


def solve_constant_sign(cfg, scfg=None, sign="+", u0=None):
    """Nehari descent on phi_+ (sign '+') or phi_- (sign '-')."""
    scfg = scfg or SolverConfig()
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    which = "plus" if sign == "+" else "minus"
    guess = scfg.initial_guess or "bump"
    if u0 is None:
        u0 = initial_guess(cfg.grid, guess)
        u0 = u0 if sign == "+" else -u0
    else:
        guess = "user"

    def project(v):
        return project_ray(cfg, v, which) * v

    result = _descent(cfg, scfg, u0.with_zero_boundary(), which, project)
    kind = "positive" if sign == "+" else "negative"
    rep = _finish(cfg, scfg, kind, result[0], which, result, guess, 0)
    wrong = rep.norm_minus if sign == "+" else rep.norm_plus
    if wrong > 1e-6 * rep.norm:
        raise SignViolationError(
            f"sign_violation: wrong-sign part has norm {wrong:.3e} "
            f"(field norm {rep.norm:.3e})")
    return rep


def solve_sign_changing(cfg, scfg=None, u0=None):
    """Descent on phi over the sign-changing Nehari set.

    On collapse of one part the solve restarts from the default guess plus a
    seeded random smooth perturbation, up to ``max_restarts`` times.
    """
    scfg = scfg or SolverConfig()
    guess = scfg.initial_guess or "bump-pair"
    base = initial_guess(cfg.grid, guess) if u0 is None else u0.with_zero_boundary()
    if u0 is not None:
        guess = "user"
    rng = np.random.default_rng(scfg.seed)
    last = None
    for restart in range(scfg.max_restarts + 1):
        w0 = base
        if restart:
            w0 = base + 0.5 * base.max_abs() * random_smooth_field(cfg.grid, rng)
        first = [True]

        def project(v):
            # trial fields sit next to a projected iterate: warm start at (1, 1)
            start = None if first[0] else (1.0, 1.0)
            first[0] = False
            return project_pair(cfg, v, tol=scfg.pair_tol, start=start).projected

        try:
            result = _descent(cfg, scfg, w0, "phi", project)
        except (NehariError, ValueError) as exc:
            last = str(exc)
            continue
        rep = _finish(cfg, scfg, "sign-changing", result[0], "phi", result, guess, restart)
        if min(rep.norm_plus, rep.norm_minus) >= 1e-3 * rep.norm:
            return rep
        last = (f"part norms {rep.norm_plus:.3e}, {rep.norm_minus:.3e} "
                f"below 1e-3 * {rep.norm:.3e}")
    raise NodalCollapseError(
        f"nodal_collapse: one part of the sign-changing iterate vanished ({last}); "
        "try a different initial guess or seed")


def solve_all(cfg, scfg=None):
    """(u0, v0, w0) reports on one configuration."""
    scfg = scfg or SolverConfig()
    pos = solve_constant_sign(cfg, scfg, "+")
    neg = solve_constant_sign(cfg, scfg, "-")
    nod = solve_sign_changing(cfg, replace(scfg, initial_guess=None))
    return pos, neg, nod


def weak_form_defect(cfg, u, test_fields):
    """max |<phi'(u), v>| / ||v||_{1,H,0} over the test fields."""
    rv = residual(cfg, u)
    return max(abs(pairing(rv, v)) / sobolev_norms(cfg, v).zero for v in test_fields)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class GeometryReport:
    deltas: list
    sphere_min: list  # (min phi, min phi_plus, min phi_minus) per delta
    ray_t: np.ndarray
    ray_phi: np.ndarray
    ridge_t: float  # largest sampled t with phi(t u) > 0
    first_negative_t: float
    decreasing_doublings: int
    phi_at_zero: float = 0.0

    @property
    def m_delta(self):
        return [m[0] for m in self.sphere_min]

    def to_text(self):
        rows = []
        for d, (a, b, c) in zip(self.deltas, self.sphere_min):
            rows.append(f"delta={d:.6g} sphere_min_phi={a:.10e} "
                        f"sphere_min_phi_plus={b:.10e} sphere_min_phi_minus={c:.10e}")
        rows.append(f"phi_at_zero={self.phi_at_zero:.1f}")
        rows.append(f"ridge_t={self.ridge_t:.6g}")
        rows.append(f"first_negative_t={self.first_negative_t:.6g}")
        rows.append(f"decreasing_doublings={self.decreasing_doublings}")
        for t, v in zip(self.ray_t, self.ray_phi):
            rows.append(f"ray t={t:.6g} phi={v:.10e}")
        return "\n".join(rows) + "\n"


def mountain_pass_geometry(cfg, u_far=None, deltas=(0.1,), samples=200, seed=0,
                           doublings=40):
    """Sampled sphere infima of phi, phi_+, phi_- and the energy along a ray."""
    if u_far is None:
        u_far = initial_guess(cfg.grid, "bump")
    if u_far.max_abs() == 0.0:
        raise ValueError("u_far must be nonzero")
    rng = np.random.default_rng(seed)
    fields = [random_smooth_field(cfg.grid, rng) for _ in range(samples)]
    norms = [sobolev_norms(cfg, v).zero for v in fields]
    sphere = []
    for delta in deltas:
        vals = np.array([
            [getattr(energy_phi(cfg, v * (delta / n)), a) for a in ("phi", "phi_plus", "phi_minus")]
            for v, n in zip(fields, norms)])
        sphere.append(tuple(float(m) for m in vals.min(axis=0)))

    ts = 2.0 ** np.arange(doublings + 1)
    phis = []
    for t in ts:
        try:
            phis.append(energy_phi(cfg, t * u_far).phi)
        except ValueError:
            break
    phis = np.array(phis)
    ts = ts[:len(phis)]
    pos = np.flatnonzero(phis > 0)
    ridge = float(ts[pos[-1]]) if pos.size else 0.0
    neg = np.flatnonzero((phis < 0) & (ts > ridge))
    first_neg = float(ts[neg[0]]) if neg.size else np.inf
    dec = 0
    if neg.size:
        k = neg[0]
        while k + 1 < len(phis) and phis[k + 1] < phis[k]:
            dec += 1
            k += 1
    return GeometryReport(list(deltas), sphere, ts, phis, ridge, first_neg, dec,
                          energy_phi(cfg, cfg.grid.zeros()).phi)


def coercivity_profile(cfg, directions, scales, seed=0):
    """Rows (direction, s, ||P(u + s psi)||_{1,H,0}, phi(P(u + s psi))).

    Each direction u is perturbed by s times a fixed seeded smooth field psi
    and the sum is ray-projected onto the Nehari set P.  Purely a recorded
    trend; nothing is asserted here.
    """
    rng = np.random.default_rng(seed)
    psi = random_smooth_field(cfg.grid, rng, modes=6)
    rows = []
    for i, u in enumerate(directions):
        if u.max_abs() == 0.0:
            raise ValueError("directions must be nonzero")
        for s in scales:
            v = u + s * u.max_abs() * psi
            if v.max_abs() == 0.0:
                continue
            w = project_ray(cfg, v) * v
            rows.append((i, float(s), sobolev_norms(cfg, w).zero, energy_phi(cfg, w).phi))
    return rows


def linf_diagnostic(cfg, u, r=None):
    """(||u||_inf, ||u||_{r(.)}, log||u||_inf / log||u||_{r(.)}).

    ``r`` defaults to the growth exponent of the nonlinearity at the nodes.
    The ratio is NaN when ||u||_{r(.)} = 1 and 0 for u = 0.
    """
    if r is None:
        r = ExponentField(cfg.grid, np.broadcast_to(
            cfg.nonlinearity.growth_exponent(cfg.grid.nodes), cfg.grid.counts))
    linf = u.max_abs()
    if linf == 0.0:
        return 0.0, 0.0, 0.0
    lr = luxemburg_norm(ModularSpec.var_exp(r), u)
    ratio = np.log(linf) / np.log(lr) if lr != 1.0 else np.nan
    return linf, lr, float(ratio)
