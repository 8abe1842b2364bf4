import numpy as np
import pytest

from doublephase.energy import (energy_phi, monotonicity_sample, operator_residual, pairing,
                                residual)
from doublephase.mesh import CorruptFieldError, truncate, unit_square
from doublephase.problem import NonlinearitySpec
from conftest import make_cfg, random_dirichlet

CONFIGS = [
    dict(p=1.8, q=2.2, mu="x1"),
    dict(p="1.5 + 0.3*x1", q="2.4 + 0.2*sin(pi*x2)", mu="0.5 + 0.5*x2"),
    dict(p=2.5, q=2.9, mu=1, nl=NonlinearitySpec("log-example", r1=4, r2=4.5, a=3)),
]


def cell_data_2d(u, h):
    """Independent midpoint gradients and corner averages by slicing."""
    v = u.values
    a, b, c, d = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
    gx = (b + d - a - c) / (2 * h)
    gy = (c + d - a - b) / (2 * h)
    return np.hypot(gx, gy), (a + b + c + d) / 4


def test_zero_field():
    cfg = make_cfg(n=9)
    e = energy_phi(cfg, cfg.grid.zeros())
    assert (e.I_p, e.I_q, e.F_term, e.phi) == (0.0, 0.0, 0.0, 0.0)
    assert residual(cfg, cfg.grid.zeros()).max_abs() == 0.0


def test_nonnegative_field_truncations(rng):
    cfg = make_cfg(n=17)
    u = cfg.grid.field(np.abs(random_dirichlet(cfg.grid, rng).values))
    e = energy_phi(cfg, u)
    assert e.phi_plus == e.phi
    assert np.array_equal(residual(cfg, u, "plus").values, residual(cfg, u).values)


def test_truncation_bookkeeping(rng):
    cfg = make_cfg(n=17)
    u = random_dirichlet(cfg.grid, rng)
    e = energy_phi(cfg, u)
    assert e.phi == e.I_p + e.I_q - e.F_term
    assert e.phi_plus - e.phi == pytest.approx(e.F_term - e.F_plus, abs=1e-13)


def test_energy_matches_independent_assembly(rng):
    cfg = make_cfg(n=17, p=1.8, q=2.2, mu=0.7)
    u = random_dirichlet(cfg.grid, rng)
    h = 1 / 16
    gn, avg = cell_data_2d(u, h)
    ref = np.sum(gn ** 1.8 / 1.8 + 0.7 * gn ** 2.2 / 2.2 - avg ** 4 / 4) * h * h
    assert energy_phi(cfg, u).phi == pytest.approx(ref, rel=1e-12)


def test_semilinear_closed_form_rate():
    # phi = pi^2/4 - (1/4)(3/8)^2 for u = sin(pi x1) sin(pi x2)
    exact = np.pi ** 2 / 4 - 9 / 256
    errs = []
    for n in (17, 33, 65):
        cfg = make_cfg(n=n, p=2, q=2.2, mu=0)
        X = cfg.grid.nodes
        u = cfg.grid.field(np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1]))
        errs.append(abs(energy_phi(cfg, u).phi - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)
    assert errs[2] < 2.5e-3


def fd_check(cfg, u, v, which, eps=1e-5):
    plus = energy_phi(cfg, u + eps * v).total(which)
    minus = energy_phi(cfg, u - eps * v).total(which)
    return (plus - minus) / (2 * eps), pairing(residual(cfg, u, which), v)


@pytest.mark.parametrize("kw", CONFIGS)
@pytest.mark.parametrize("which", ["phi", "plus", "minus"])
def test_directional_derivative(kw, which, rng):
    cfg = make_cfg(n=13, **kw)
    for _ in range(20):
        u = random_dirichlet(cfg.grid, rng)
        v = random_dirichlet(cfg.grid, rng)
        fd, an = fd_check(cfg, u, v, which)
        assert fd == pytest.approx(an, rel=1e-5)


def test_directional_derivative_second_order(rng):
    cfg = make_cfg(n=13, p="1.5 + 0.3*x1", q=2.4, mu="x2")
    u = random_dirichlet(cfg.grid, rng)
    v = random_dirichlet(cfg.grid, rng)
    errs = []
    for eps in (1e-2, 1e-3):
        fd, an = fd_check(cfg, u, v, "phi", eps)
        errs.append(abs(fd - an))
    assert errs[0] / errs[1] == pytest.approx(100, rel=0.2)


def test_pairing_properties(rng):
    cfg = make_cfg(n=13)
    g = cfg.grid
    rv = residual(cfg, random_dirichlet(g, rng))
    assert pairing(rv, g.zeros()) == 0.0
    v1, v2 = random_dirichlet(g, rng), random_dirichlet(g, rng)
    assert pairing(rv, 2.0 * v1 - 3.0 * v2) == pytest.approx(
        2.0 * pairing(rv, v1) - 3.0 * pairing(rv, v2), rel=1e-12)
    with pytest.raises(ValueError):
        pairing(rv, unit_square(9).zeros())


def test_pairing_with_self_matches_modular(rng):
    cfg = make_cfg(n=17, p=1.8, q=2.2, mu=0.7)
    u = random_dirichlet(cfg.grid, rng)
    h = 1 / 16
    gn, avg = cell_data_2d(u, h)
    ref = np.sum(gn ** 1.8 + 0.7 * gn ** 2.2 - avg ** 4) * h * h
    assert pairing(residual(cfg, u), u) == pytest.approx(ref, rel=1e-10)


def test_boundary_rows_zero(rng):
    cfg = make_cfg(n=9)
    rv = residual(cfg, random_dirichlet(cfg.grid, rng))
    assert rv.is_dirichlet()


def test_monotonicity(rng):
    cfg = make_cfg(n=13)
    g = cfg.grid
    u = random_dirichlet(g, rng)
    assert monotonicity_sample(cfg, [(u, u)]) == 0.0
    lap = make_cfg(n=13, p=2, q=2.2, mu=0)
    v = random_dirichlet(g, rng)
    d = u - v
    assert monotonicity_sample(lap, [(u, v)]) == pytest.approx(
        pairing(operator_residual(lap, d), d), rel=1e-12)
    pairs = [(random_dirichlet(g, rng), random_dirichlet(g, rng)) for _ in range(100)]
    assert monotonicity_sample(cfg, pairs) > 0


def test_disjoint_support_additivity():
    cfg = make_cfg(n=33)
    X = cfg.grid.nodes
    r1 = np.hypot(X[..., 0] - 0.25, X[..., 1] - 0.5)
    r2 = np.hypot(X[..., 0] - 0.75, X[..., 1] - 0.5)
    u = cfg.grid.field(3 * np.maximum(0.2 - r1, 0))
    v = cfg.grid.field(-4 * np.maximum(0.2 - r2, 0))
    assert energy_phi(cfg, u + v).phi == pytest.approx(
        energy_phi(cfg, u).phi + energy_phi(cfg, v).phi, rel=1e-13)


def splitting_defect(n):
    cfg = make_cfg(n=n)
    X = cfg.grid.nodes
    w = cfg.grid.field(5 * np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1])
                       * (X[..., 0] - 0.37 - 0.1 * np.sin(np.pi * X[..., 1])))
    return abs(energy_phi(cfg, w).phi - energy_phi(cfg, truncate(w, "+")).phi
               - energy_phi(cfg, -truncate(w, "-")).phi)


def test_splitting_defect_shrinks():
    assert splitting_defect(33) / splitting_defect(65) >= 1.5


def test_non_finite_rejected():
    cfg = make_cfg(n=9)
    vals = np.zeros(cfg.grid.counts)
    vals[4, 4] = np.inf
    with pytest.raises(CorruptFieldError):
        energy_phi(cfg, cfg.grid.field(vals))
