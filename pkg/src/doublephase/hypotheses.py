"""Numerical certificates for the structural hypotheses of the problem.

Exponent conditions are checked nodewise, monotonicity of p along the
direction l on grid-aligned rays, and the growth conditions on f on
log-spaced samples of t.  Limits cannot be decided from samples, so the
growth checks at 0 and infinity return three-valued verdicts based on the
trend over the extreme decades.
"""

from dataclasses import dataclass, field
from math import gcd
from typing import NamedTuple

import numpy as np

from .energy import flux_kernel
from .problem import ExponentField

__all__ = [
    "HypothesisError",
    "Verdict",
    "HypothesisReport",
    "critical_exponents",
    "check_H1",
    "check_H2",
    "check_H3_structure",
    "check_f_hypotheses",
    "check_all",
    "default_t_grid",
    "f5_window",
    "Interpolation",
    "interpolation_exponent",
    "log_holder_diagnostic",
]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    name: str
    verdict: str
    witness: dict = None
    constants: dict = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == FAIL and not self.witness:
            raise ValueError(f"failed verdict {self.name} needs a witness")

    def to_line(self):
        parts = [f"hypothesis={self.name}", f"verdict={self.verdict}"]
        for k, v in self.constants.items():
            parts.append(f"{k}={_fmt(v)}")
        if self.witness:
            for k, v in self.witness.items():
                parts.append(f"witness.{k}={_fmt(v)}")
        if self.note:
            parts.append(f"note={self.note.replace(' ', '_')}")
        return " ".join(parts)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, (tuple, list, np.ndarray)):
        return "(" + ",".join(_fmt(x) for x in np.asarray(v).ravel()) + ")"
    return str(v)


@dataclass
class HypothesisReport:
    entries: list = field(default_factory=list)

    def add(self, *args, **kwargs):
        self.entries.append(Verdict(*args, **kwargs))
        return self

    def extend(self, other):
        self.entries.extend(other.entries)
        return self

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __contains__(self, name):
        return any(e.name == name for e in self.entries)

    def verdict(self, name):
        return self[name].verdict

    @property
    def failures(self):
        return [e for e in self.entries if e.verdict == FAIL]

    def all_pass(self, prefix=""):
        return all(e.verdict == PASS for e in self.entries if e.name.startswith(prefix))

    def any_fail(self, prefix=""):
        return any(e.verdict == FAIL for e in self.entries if e.name.startswith(prefix))

    def to_text(self):
        return "\n".join(e.to_line() for e in self.entries) + "\n"


# ---------------------------------------------------------------------------
# exponent arithmetic


def _critical(p, N, num):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p < N, num * p / (N - p), np.inf)
    return out


def critical_exponents(p, N):
    """Sobolev and trace critical exponents (p*, p_*); +inf where p >= N."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if isinstance(p, ExponentField):
        return (ExponentField(p.grid, _critical(p.values, N, N)),
                ExponentField(p.grid, _critical(p.values, N, N - 1)))
    star = _critical(p, N, N)
    trace = _critical(p, N, N - 1)
    if star.ndim == 0:
        return float(star), float(trace)
    return star, trace


def f5_window(p_minus, N, r_plus):
    """Open interval for min{l_-, l~_-}: ((r_+ - p_-) N / p_-, r_+)."""
    p_star = critical_exponents(p_minus, N)[0]
    if not r_plus < p_star:
        raise HypothesisError(
            f"r_+ = {r_plus} is not below p*_- = {p_star}; window undefined")
    return (r_plus - p_minus) * N / p_minus, float(r_plus)


class Interpolation(NamedTuple):
    t: float
    t_times_r: float
    below_p_minus: bool = None


def interpolation_exponent(r_plus, p_star_minus, l_minus, p_minus=None):
    """t in (0, 1) with 1/r_+ = t/p*_- + (1-t)/l_-, and t*r_+."""
    if not l_minus < r_plus:
        raise HypothesisError(f"l_- = {l_minus} must be below r_+ = {r_plus}")
    if not r_plus < p_star_minus:
        raise HypothesisError(f"r_+ = {r_plus} must be below p*_- = {p_star_minus}")
    inv_star = 0.0 if np.isinf(p_star_minus) else 1.0 / p_star_minus
    t = (1.0 / l_minus - 1.0 / r_plus) / (1.0 / l_minus - inv_star)
    tr = t * r_plus
    flag = None if p_minus is None else bool(tr < p_minus)
    return Interpolation(float(t), float(tr), flag)


def log_holder_diagnostic(e):
    """max |e(x)-e(y)| |log|x-y|| over node pairs with |x-y| < 1/2."""
    g = e.grid
    h = np.asarray(g.spacing)
    if np.any(h >= 0.5):
        raise ValueError("grid spacing must be below 1/2")
    vals = e.values
    reach = [int(np.ceil(0.5 / hk)) for hk in h]
    best = 0.0
    for off in np.ndindex(*[2 * r + 1 for r in reach]):
        d = np.array(off) - np.array(reach)
        # each unordered pair once
        nz = np.flatnonzero(d)
        if nz.size == 0 or d[nz[0]] < 0:
            continue
        dist = float(np.linalg.norm(d * h))
        if dist >= 0.5:
            continue
        a = tuple(slice(max(0, -dk), n - max(0, dk)) for dk, n in zip(d, g.counts))
        b = tuple(slice(max(0, dk), n - max(0, -dk)) for dk, n in zip(d, g.counts))
        diff = np.max(np.abs(vals[a] - vals[b]), initial=0.0)
        best = max(best, diff * abs(np.log(dist)))
    return best


# ---------------------------------------------------------------------------
# (H1), (H2)


def _index_step(direction, spacing, max_den):
    """Smallest integer index step parallel to direction / spacing."""
    v = np.asarray(direction, dtype=float) / np.asarray(spacing)
    if not np.any(v):
        return None
    v = v / np.max(np.abs(v))
    for m in range(1, max_den + 1):
        k = m * v
        if np.allclose(k, np.round(k), atol=1e-9):
            k = np.round(k).astype(int)
            d = 0
            for ki in k:
                d = gcd(d, abs(int(ki)))
            return k // d
    return None


def _rays(counts, step):
    """Index sequences x, x+k, x+2k, ... starting where x-k leaves the grid."""
    counts = np.asarray(counts)
    for start in np.ndindex(*counts):
        s = np.asarray(start)
        prev = s - step
        if np.all((prev >= 0) & (prev < counts)):
            continue
        pts = []
        cur = s
        while np.all((cur >= 0) & (cur < counts)):
            pts.append(tuple(cur))
            cur = cur + step
        if len(pts) >= 3:
            yield pts


def check_monotone_direction(p, direction):
    """Monotonicity of p along grid-aligned rays in the given direction."""
    g = p.grid
    if not np.any(np.asarray(direction, dtype=float)):
        return Verdict("H1.monotone", FAIL, {"direction": direction},
                       note="direction l must be nonzero")
    step = _index_step(direction, g.spacing, max(g.counts))
    if step is None:
        return Verdict("H1.monotone", INCONCLUSIVE,
                       note="direction not resolved by the grid")
    tol = 1e-12 * max(1.0, p.plus)
    nrays = 0
    for pts in _rays(g.counts, step):
        nrays += 1
        vals = p.values[tuple(np.array(pts).T)]
        d = np.diff(vals)
        if np.any(d > tol) and np.any(d < -tol):
            x = g.nodes[pts[0]]
            return Verdict("H1.monotone", FAIL,
                           {"ray_start": x, "step": step,
                            "increments_min": float(d.min()),
                            "increments_max": float(d.max())})
    return Verdict("H1.monotone", PASS, constants={"rays": nrays, "step": step})


def check_H1(cfg):
    p, q, mu, N = cfg.p, cfg.q, cfg.mu, cfg.dim
    nodes = cfg.grid.nodes
    rep = HypothesisReport()

    bad = (p.values <= 1.0) | (p.values >= N)
    if bad.any():
        i = np.unravel_index(np.argmax(bad), bad.shape)
        rep.add("H1.p_range", FAIL, {"x": nodes[i], "p": p.values[i]})
    else:
        rep.add("H1.p_range", PASS, constants={"p_minus": p.minus, "p_plus": p.plus})

    bad = p.values >= q.values
    if bad.any():
        i = np.unravel_index(np.argmax(bad), bad.shape)
        rep.add("H1.p_lt_q", FAIL, {"x": nodes[i], "p": p.values[i], "q": q.values[i]})
    else:
        rep.add("H1.p_lt_q", PASS)

    p_star_minus = float(critical_exponents(p.minus, N)[0])
    if not q.plus < p_star_minus:
        rep.add("H1.q_subcritical", FAIL, {"q_plus": q.plus, "p_star_minus": p_star_minus})
    else:
        rep.add("H1.q_subcritical", PASS,
                constants={"q_plus": q.plus, "p_star_minus": p_star_minus})

    if np.any(mu.values < 0):
        i = np.unravel_index(np.argmin(mu.values), mu.values.shape)
        rep.add("H1.mu_nonneg", FAIL, {"x": nodes[i], "mu": mu.values[i]})
    else:
        rep.add("H1.mu_nonneg", PASS, constants={"mu_sup": mu.plus})

    rep.entries.append(check_monotone_direction(p, cfg.direction))
    return rep


def check_H2(cfg):
    """1 < p < N and p < q < p* nodewise, mu >= 0."""
    p, q, N = cfg.p, cfg.q, cfg.dim
    p_star = critical_exponents(p, N)[0].values
    ok = (p.values > 1) & (p.values < N) & (p.values < q.values) & (q.values < p_star)
    ok &= cfg.mu.values >= 0
    if ok.all():
        return HypothesisReport().add("H2", PASS)
    i = np.unravel_index(np.argmin(ok), ok.shape)
    return HypothesisReport().add(
        "H2", FAIL, {"x": cfg.grid.nodes[i], "p": p.values[i], "q": q.values[i]})


# ---------------------------------------------------------------------------
# (H3)


def _field_at(fld, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if fld.expr is not None:
        return fld.expr(x)
    from scipy.interpolate import RegularGridInterpolator
    interp = RegularGridInterpolator(fld.grid.axes(), fld.values)
    return interp(x)


def check_H3_structure(cfg, samples):
    """Structure constants of A(x,t,xi) = |xi|^(p-2) xi + mu |xi|^(q-2) xi, B = f.

    ``samples`` is a sequence of (x, t, xi).  At xi = 0 the flux is 0 (its
    continuous extension).  alpha_2 is reported as inf A.xi / (|xi|^p + mu |xi|^q)
    over samples with nonzero xi; the inequality with alpha_3 = 1 is checked
    separately.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("samples must be nonempty")
    x = np.array([np.asarray(s[0], dtype=float) for s in samples])
    t = np.array([float(s[1]) for s in samples])
    xi = np.array([np.asarray(s[2], dtype=float) for s in samples])
    p, q, mu = _field_at(cfg.p, x), _field_at(cfg.q, x), _field_at(cfg.mu, x)
    r = np.asarray(cfg.nonlinearity.growth_exponent(x), dtype=float) * np.ones_like(t)
    n = np.sqrt(np.sum(xi ** 2, axis=1))
    k = flux_kernel(n, p, q, mu)
    A = k[:, None] * xi
    A_norm = np.sqrt(np.sum(A ** 2, axis=1))
    A_dot = np.sum(A * xi, axis=1)
    S = n ** p + mu * n ** q
    rep = HypothesisReport()

    p_star = critical_exponents(p, cfg.dim)[0]
    bad = ~((p < r) & (r < p_star))
    if bad.any():
        i = int(np.argmax(bad))
        rep.add("H3.r_range", FAIL, {"x": x[i], "r": r[i], "p": p[i]})
    else:
        rep.add("H3.r_range", PASS)

    p_conj = p / (p - 1.0)
    bound1 = np.abs(t) ** (r / p_conj) + n ** (p - 1.0) + mu * n ** (q - 1.0) + 1.0
    alpha1 = float(np.max(A_norm / bound1))
    rep.add("H3.growth", PASS, constants={"alpha1": alpha1})

    nz = S > 0
    alpha2 = float(np.min(A_dot[nz] / S[nz])) if nz.any() else 1.0
    lhs_ok = A_dot >= alpha2 * S - (np.abs(t) ** r + 1.0) - 1e-12 * (S + 1.0)
    if alpha2 > 0 and lhs_ok.all():
        rep.add("H3.coercivity", PASS, constants={"alpha2": alpha2, "alpha3": 1.0})
    else:
        i = int(np.argmin(lhs_ok)) if not lhs_ok.all() else int(np.argmin(A_dot))
        rep.add("H3.coercivity", FAIL, {"x": x[i], "t": t[i], "xi": xi[i]},
                constants={"alpha2": alpha2})

    B = np.abs(cfg.nonlinearity.f(x, t))
    r_conj = r / (r - 1.0)
    bound3 = n ** (p / r_conj) + np.abs(t) ** (r - 1.0) + 1.0
    beta = float(np.max(B / bound3))
    if np.isfinite(beta):
        rep.add("H3.convection", PASS, constants={"beta": beta})
    else:
        i = int(np.argmax(~np.isfinite(B / bound3)))
        rep.add("H3.convection", FAIL, {"x": x[i], "t": t[i]})
    return rep


# ---------------------------------------------------------------------------
# (f1)-(f7)


def default_t_grid(points_per_decade=20):
    pos = np.logspace(-6, 6, 12 * points_per_decade + 1)
    return np.concatenate([-pos[::-1], pos])


def default_x_samples(grid, per_axis=5):
    axes = [np.linspace(0.0, e, per_axis) for e in grid.extents]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, grid.dim)


def _strictly_increasing(v, rel=1e-12):
    d = np.diff(v, axis=-1)
    return np.all(d > rel * np.maximum(np.abs(v[..., 1:]), np.abs(v[..., :-1])), axis=-1)


def _non_increasing(v, rel=1e-9):
    d = np.diff(v, axis=-1)
    return np.all(d <= rel * np.maximum(np.abs(v[..., 1:]), np.abs(v[..., :-1])), axis=-1)


def check_f_hypotheses(spec, cfg, t_grid=None, x_samples=None, K_floor=0.0):
    """Sampled verdicts for (f1)-(f7) plus the growth constants M and C_eps."""
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    x = default_x_samples(cfg.grid) if x_samples is None else np.atleast_2d(x_samples)
    pos = np.sort(t_grid[t_grid > 0])
    neg = np.sort(-t_grid[t_grid < 0])
    for side in (pos, neg):
        if side.size == 0 or side[0] > 1e-6 * (1 + 1e-12) or side[-1] < 1e6 * (1 - 1e-12):
            raise ValueError("t_grid must span [1e-6, 1e6] in both signs")
    N = cfg.dim
    q_plus = cfg.q.plus
    p_minus = cfg.p.minus
    p_star_minus = float(critical_exponents(p_minus, N)[0])
    px = _field_at(cfg.p, x)[:, None]
    rx = np.asarray(spec.growth_exponent(x), dtype=float) * np.ones(len(x))
    r_plus = float(rx.max())
    X = x[:, None, :]
    rep = HypothesisReport()

    def fF(tt):
        T = np.broadcast_to(tt, (len(x), len(tt)))
        return spec.f(X, T), spec.F(X, T), T

    # (f1) continuity spot check on the sample grid
    tt = np.sort(np.concatenate([t_grid, [-1.0, 1.0]]))
    f0, _, _ = fF(tt)
    dt = 1e-10 * np.maximum(np.abs(tt), 1e-6)
    f_lo, _, _ = fF(tt - dt)
    f_hi, _, _ = fF(tt + dt)
    jump = np.maximum(np.abs(f_hi - f0), np.abs(f0 - f_lo)) / (1.0 + np.abs(f0))
    if np.all(jump < 1e-6) and np.all(np.isfinite(f0)):
        rep.add("f1", PASS, constants={"max_jump": float(jump.max())})
    else:
        i, j = np.unravel_index(np.argmax(jump), jump.shape)
        rep.add("f1", FAIL, {"x": x[i], "t": tt[j], "jump": jump[i, j]})

    # (f2)
    f_all, F_all, T = fF(t_grid)
    C = float(np.max(np.abs(f_all) / (1.0 + np.abs(T) ** (rx[:, None] - 1.0))))
    if not np.isfinite(C):
        rep.add("f2", FAIL, {"C": C})
    elif not r_plus < p_star_minus:
        rep.add("f2", FAIL, {"r_plus": r_plus, "p_star_minus": p_star_minus},
                constants={"C": C})
    else:
        rep.add("f2", PASS, constants={"C": C, "r_plus": r_plus, "r_minus": float(rx.min())})

    # (f3): F/|s|^q+ increasing over the largest decade
    verdicts = []
    for sgn, side in ((1, pos), (-1, neg)):
        s = side[side >= side[-1] / 10.0]
        _, F, _ = fF(sgn * s)
        ratio = F / s ** q_plus
        if np.all(_strictly_increasing(ratio)):
            verdicts.append((PASS, None))
        else:
            bad = _non_increasing(ratio)
            if bad.any():
                i = int(np.argmax(bad))
                verdicts.append((FAIL, {"x": x[i], "sign": sgn, "ratio_start": ratio[i, 0],
                                        "ratio_end": ratio[i, -1]}))
            else:
                verdicts.append((INCONCLUSIVE, None))
    rep.entries.append(_combine("f3", verdicts))

    # (f4): F/|s|^p(x) decreasing to below 1e-3 over the smallest decades
    verdicts = []
    for sgn, side in ((1, pos), (-1, neg)):
        s = side[side <= side[0] * 100.0]
        _, F, _ = fF(sgn * s)
        ratio = np.abs(F) / s[None, :] ** px
        d = np.diff(ratio, axis=1)
        mono = np.all(d >= -1e-12 * ratio[:, 1:], axis=1)
        growing = np.all(d < 0, axis=1)  # ratio increases as s -> 0
        small = ratio[:, 0] < 1e-3
        if np.all(mono & small):
            verdicts.append((PASS, None))
        elif np.any(growing) or np.all(mono):
            i = int(np.argmax(growing)) if np.any(growing) else int(np.argmin(small))
            verdicts.append((FAIL, {"x": x[i], "sign": sgn, "s": s[0], "ratio": ratio[i, 0]}))
        else:
            verdicts.append((INCONCLUSIVE, None))
    rep.entries.append(_combine("f4", verdicts))

    # (f5)
    rep.entries.append(_check_f5(spec, x, fF, pos, neg, q_plus, p_minus, N, r_plus, K_floor))

    # (f6): f/|t|^(q+-1) strictly increasing on each sign
    verdicts = []
    for sgn, side in ((1, pos), (-1, neg)):
        tt = np.sort(sgn * side)
        f, _, _ = fF(tt)
        quot = f / np.abs(tt) ** (q_plus - 1.0)
        ok = np.all(np.diff(quot, axis=1) > 0, axis=1)
        if ok.all():
            verdicts.append((PASS, None))
        else:
            i = int(np.argmin(ok))
            j = int(np.argmin(np.diff(quot[i]) > 0))
            verdicts.append((FAIL, {"x": x[i], "t": tt[j], "t_next": tt[j + 1]}))
    rep.entries.append(_combine("f6", verdicts))

    # (f7)
    g7 = f_all * T - q_plus * F_all
    tol = 1e-12 * (np.abs(f_all * T) + q_plus * np.abs(F_all))
    if np.all(g7 >= -tol):
        rep.add("f7", PASS, constants={"min": float(g7.min())})
    else:
        i, j = np.unravel_index(np.argmin(g7 + tol), g7.shape)
        rep.add("f7", FAIL, {"x": x[i], "t": T[i, j], "value": g7[i, j]})

    # consequences: F > -M, C_eps of the two epsilon bounds (eps = 1)
    absT = np.abs(T)
    M = max(0.0, float(-F_all.min())) + 1.0
    c_upper = float(np.max((np.abs(F_all) - absT ** px / px) / absT ** rx[:, None]))
    c_lower = float(np.max(absT ** q_plus / q_plus - F_all))
    rep.add("growth_constants", PASS, constants={
        "f_at_zero": float(np.max(np.abs(spec.f(x, np.zeros(len(x)))))),
        "q_plus_lt_r_minus": bool(q_plus < rx.min()),
        "M": M, "C_eps_upper": max(c_upper, 0.0), "C_eps_lower": max(c_lower, 0.0)})
    return rep


def _combine(name, verdicts, constants=None):
    kinds = [v for v, _ in verdicts]
    constants = {k: v for k, v in (constants or {}).items() if v is not None}
    if FAIL in kinds:
        return Verdict(name, FAIL, verdicts[kinds.index(FAIL)][1], constants)
    if INCONCLUSIVE in kinds:
        return Verdict(name, INCONCLUSIVE, constants=constants,
                       note="non-monotone trend over the extreme decades")
    return Verdict(name, PASS, constants=constants)


def _check_f5(spec, x, fF, pos, neg, q_plus, p_minus, N, r_plus, K_floor):
    try:
        lo, hi = f5_window(p_minus, N, r_plus)
    except HypothesisError:
        return Verdict("f5", FAIL, {"r_plus": r_plus, "p_minus": p_minus},
                       note="window undefined")
    cands = list(np.linspace(lo, hi, 42)[1:-1])
    natural = spec.cerami_exponents(x)
    found = []
    for k, (sgn, side) in enumerate(((1, pos), (-1, neg))):
        own = cands[:]
        if natural is not None:
            l_nat = float(np.min(natural[k]))
            if lo < l_nat < hi:
                own.append(l_nat)
        s = side[side >= side[-1] / 10.0]
        f, F, _ = fF(sgn * s)
        g = f * (sgn * s) - q_plus * F
        best = None
        for l in sorted(own, reverse=True):
            Q = g / s ** l
            K = float(Q.min())
            if K > K_floor and np.all(Q[:, -1] >= Q[:, 0] * (1 - 1e-9)):
                best = (l, K)
                break
        found.append(best)
    if found[0] is None or found[1] is None:
        side = "+inf" if found[0] is None else "-inf"
        return Verdict("f5", FAIL, {"side": side, "window": (lo, hi)},
                       note="no admissible exponent found on the largest decade")
    (l, K1), (lt, K2) = found
    return Verdict("f5", PASS, constants={
        "window_lo": lo, "window_hi": hi, "l": l, "l_tilde": lt, "K": min(K1, K2)})


def check_all(cfg, t_grid=None, x_samples=None, h3_samples=None, seed=0):
    """(H1), (H2), (H3) on random samples and (f1)-(f7)."""
    rep = HypothesisReport()
    rep.extend(check_H1(cfg))
    rep.extend(check_H2(cfg))
    if h3_samples is None:
        rng = np.random.default_rng(seed)
        m = 200
        xs = rng.uniform(0, 1, (m, cfg.dim)) * np.asarray(cfg.grid.extents)
        ts = rng.standard_normal(m) * 10.0 ** rng.uniform(-3, 3, m)
        xis = rng.standard_normal((m, cfg.dim)) * 10.0 ** rng.uniform(-3, 3, (m, 1))
        xis[0] = 0.0
        h3_samples = list(zip(xs, ts, xis))
    rep.extend(check_H3_structure(cfg, h3_samples))
    rep.extend(check_f_hypotheses(cfg.nonlinearity, cfg, t_grid, x_samples))
    return rep
