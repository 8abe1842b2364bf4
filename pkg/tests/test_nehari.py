import numpy as np
import pytest

from doublephase.energy import energy_phi, pairing, residual
from doublephase.mesh import truncate
from doublephase.nehari import (FiberMap, NehariBracketError, fibering, fibering_profile,
                                project_pair, project_ray, write_profile_csv)
from doublephase.problem import NonlinearitySpec
from doublephase.solvers import initial_guess
from conftest import make_cfg, random_dirichlet


def semilinear_t(u, h):
    """sqrt(||grad u||^2 / int avg(u)^4) by direct slicing."""
    v = u.values
    a, b, c, d = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
    gx = (b + d - a - c) / (2 * h)
    gy = (c + d - a - b) / (2 * h)
    avg = (a + b + c + d) / 4
    return np.sqrt(np.sum(gx ** 2 + gy ** 2) / np.sum(avg ** 4))


def test_fiber_map_basics(rng):
    cfg = make_cfg(n=13)
    u = random_dirichlet(cfg.grid, rng)
    fm = FiberMap(cfg, u)
    assert fm.k(0.0) == 0.0
    for t in (0.3, 1.0, 2.7):
        k, kp = fibering(cfg, u, t)
        assert fm.k(t) == pytest.approx(k, rel=1e-12)
        assert fm.kprime(t) == pytest.approx(kp, rel=1e-10, abs=1e-12)
    with pytest.raises(ValueError):
        FiberMap(cfg, cfg.grid.zeros())


def test_semilinear_closed_form(rng):
    cfg = make_cfg(n=17, p=2, q=2.2, mu=0)
    for _ in range(20):
        u = random_dirichlet(cfg.grid, rng)
        assert project_ray(cfg, u) == pytest.approx(semilinear_t(u, 1 / 16), rel=1e-10)


def test_scaling_and_idempotence(rng):
    cfg = make_cfg(n=13)
    u = random_dirichlet(cfg.grid, rng)
    t = project_ray(cfg, u)
    for lam in (0.1, 3.0, 17.0):
        assert project_ray(cfg, lam * u) == pytest.approx(t / lam, rel=1e-10)
    assert project_ray(cfg, t * u) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("which", ["phi", "plus", "minus"])
def test_projection_lands_on_nehari_set(which, rng):
    cfg = make_cfg(n=13, p="1.6 + 0.2*x1", q=2.3, mu="x2")
    for _ in range(10):
        u = random_dirichlet(cfg.grid, rng)
        t = project_ray(cfg, u, which)
        v = t * u
        ident = pairing(residual(cfg, v, which), v)
        assert abs(ident) <= 1e-8 * energy_phi(cfg, v).scale(which)


def test_bracket_failure_without_superlinear_growth():
    # f = |t|^(q-2) t with r = q: k'/t^(q-1) stays positive for a strong weight
    cfg = make_cfg(n=17, p=1.8, q=2.2, mu=5.0, nl=NonlinearitySpec("pure-power", r=2.2))
    u = initial_guess(cfg.grid, "bump")
    with pytest.raises(NehariBracketError) as err:
        project_ray(cfg, u)
    assert err.value.code == "nehari_bracket_failure"


def test_reduced_function_decreasing(rng):
    cfg = make_cfg(n=13)
    fm = FiberMap(cfg, random_dirichlet(cfg.grid, rng))
    vals = [fm.reduced(t) for t in np.geomspace(1e-3, 1e3, 200)]
    assert np.all(np.diff(vals) < 0)


def test_profile_shape(tmp_path):
    cfg = make_cfg(n=17)
    u = initial_guess(cfg.grid, "bump")
    t_u = project_ray(cfg, u)
    ts = np.geomspace(t_u / 50, t_u * 50, 301)
    rows = fibering_profile(cfg, u, ts)
    assert np.all(rows[ts < t_u, 2] > 0) and np.all(rows[ts > t_u, 2] < 0)
    i = int(np.argmax(rows[:, 1]))
    assert abs(np.log(ts[i] / t_u)) <= np.log(ts[1] / ts[0])
    assert rows[-1, 1] < 0
    path = tmp_path / "profile.csv"
    write_profile_csv(rows, path)
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back, rows)
    with pytest.raises(ValueError):
        fibering_profile(cfg, u, [1.0, 0.5])


def two_bumps(grid, gap=True):
    X = grid.nodes
    r1 = np.hypot(X[..., 0] - 0.25, X[..., 1] - 0.5)
    r2 = np.hypot(X[..., 0] - 0.75, X[..., 1] - 0.5)
    return grid.field(2 * np.maximum(0.2 - r1, 0) - 3 * np.maximum(0.2 - r2, 0))


def test_pair_decouples_for_separated_supports():
    cfg = make_cfg(n=33)
    w = two_bumps(cfg.grid)
    st = project_pair(cfg, w)
    assert st.sweeps <= 1
    assert st.pair[0] == pytest.approx(project_ray(cfg, truncate(w, "+")), rel=1e-10)
    assert st.pair[1] == pytest.approx(project_ray(cfg, -truncate(w, "-")), rel=1e-10)


def test_pair_symmetry_for_odd_field():
    cfg = make_cfg(n=33, mu=0.5)
    X = cfg.grid.nodes
    w = cfg.grid.field(np.sin(2 * np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1]))
    s, t = project_pair(cfg, w).pair
    assert s == pytest.approx(t, rel=1e-8)


def test_pair_residuals_and_membership(rng):
    cfg = make_cfg(n=17)
    w = initial_guess(cfg.grid, "bump-pair")
    st = project_pair(cfg, w, start=(1.0, 1.0))
    W = st.projected
    scale = energy_phi(cfg, W).scale()
    assert abs(st.residual_plus) <= 1e-8 * scale
    assert abs(st.residual_minus) <= 1e-8 * scale
    assert abs(st.residual_plus) <= st.initial_residuals[0] + 1e-8 * scale
    assert abs(st.residual_minus) <= st.initial_residuals[1] + 1e-8 * scale
    rv = residual(cfg, W)
    assert abs(pairing(rv, truncate(W, "+"))) <= 1e-7 * scale
    with pytest.raises(ValueError):
        project_pair(cfg, initial_guess(cfg.grid, "bump"))
