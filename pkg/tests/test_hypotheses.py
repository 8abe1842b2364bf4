import itertools

import numpy as np
import pytest

from doublephase.hypotheses import (HypothesisError, HypothesisReport, Verdict, check_all,
                                    check_f_hypotheses, check_H1, check_H3_structure,
                                    critical_exponents, default_t_grid, f5_window,
                                    interpolation_exponent, log_holder_diagnostic)
from doublephase.mesh import unit_square
from doublephase.problem import ExponentField, NonlinearitySpec
from conftest import make_cfg


def test_critical_exponents_scalar_and_field():
    assert critical_exponents(1.5, 2) == (6.0, 3.0)
    p = ExponentField.from_expr(unit_square(5), "1.2 + 0.6*x1")
    star, trace = critical_exponents(p, 2)
    assert star.values[0, 0] == pytest.approx(3.0) and star.values[-1, 0] == pytest.approx(18.0)
    assert np.isinf(critical_exponents(2.5, 2)[0])
    with pytest.raises(ValueError):
        critical_exponents(1.5, 1)


def test_verdict_needs_witness():
    with pytest.raises(ValueError):
        Verdict("f7", "fail")
    line = Verdict("f7", "pass").to_line()
    assert line == "hypothesis=f7 verdict=pass"


def test_H1_constant_pass():
    rep = check_H1(make_cfg(p=1.5, q=2.2, mu=1))
    assert rep.all_pass()
    assert rep["H1.q_subcritical"].constants["p_star_minus"] == pytest.approx(6.0)


def test_H1_supercritical_q():
    rep = check_H1(make_cfg(p=1.5, q=6.5, mu=1))
    v = rep["H1.q_subcritical"]
    assert v.verdict == "fail"
    assert v.witness["q_plus"] == 6.5 and v.witness["p_star_minus"] == pytest.approx(6.0)


def test_H1_nonmonotone_exponent():
    rep = check_H1(make_cfg(p="1.4 + 0.2*sin(2*pi*x1)", q=2.2, mu=1))
    v = rep["H1.monotone"]
    assert v.verdict == "fail" and "ray_start" in v.witness


def test_H1_monotone_variants():
    assert check_H1(make_cfg(p="1.4 + 0.2*x1", q=2.2)).verdict("H1.monotone") == "pass"
    # monotone in x1 only: fails along x2? no, constant along x2 is monotone
    assert check_H1(make_cfg(p="1.4 + 0.2*x1", q=2.2, direction=(0, 1))).verdict("H1.monotone") == "pass"
    # diagonal direction on a square grid
    rep = check_H1(make_cfg(p="1.4 + 0.1*x1 + 0.1*x2", q=2.2, direction=(1, 1)))
    assert rep.verdict("H1.monotone") == "pass"
    rep = check_H1(make_cfg(p="1.4 + 0.1*sin(pi*x1)", q=2.2, direction=(1, 0)))
    assert rep.verdict("H1.monotone") == "fail"
    # irrational direction is not resolved by the grid
    rep = check_H1(make_cfg(p=1.5, q=2.2, direction=(1, np.sqrt(2))))
    assert rep.verdict("H1.monotone") == "inconclusive"


def test_H1_other_failures():
    assert check_H1(make_cfg(p=2.0, q=2.5)).verdict("H1.p_range") == "fail"
    assert check_H1(make_cfg(p="1.5 + x1", q=2.2)).verdict("H1.p_lt_q") == "fail"


def _h3_samples(rng, m=200, dim=2):
    xs = rng.uniform(0, 1, (m, dim))
    ts = rng.standard_normal(m) * 10.0 ** rng.uniform(-2, 2, m)
    xis = rng.standard_normal((m, dim)) * 10.0 ** rng.uniform(-2, 2, (m, 1))
    xis[:3] = 0.0
    return list(zip(xs, ts, xis))


def test_H3_alpha2_identity(rng):
    cfg = make_cfg(p="1.5 + 0.3*x1", q="2.2 + 0.2*x2", mu="x1")
    rep = check_H3_structure(cfg, _h3_samples(rng))
    assert rep["H3.coercivity"].constants["alpha2"] == pytest.approx(1.0, abs=1e-12)
    assert rep.all_pass("H3")


def test_H3_laplacian_alpha1(rng):
    cfg = make_cfg(p=2, q=2.2, mu=0)
    samples = _h3_samples(rng)
    rep = check_H3_structure(cfg, samples)
    # |A| = |xi| <= |t|^(r/2) + |xi| + 1
    assert rep["H3.growth"].constants["alpha1"] <= 1.0


def test_H3_beta_brute_force(rng):
    cfg = make_cfg(p=1.8, q=2.2, mu="x1")
    samples = _h3_samples(rng)
    rep = check_H3_structure(cfg, samples)
    beta = 0.0
    for x, t, xi in samples:
        r, p = 4.0, 1.8
        n = np.linalg.norm(xi)
        beta = max(beta, abs(t) ** 3 / (n ** (p * (r - 1) / r) + abs(t) ** 3 + 1))
    assert rep["H3.convection"].constants["beta"] == pytest.approx(beta, rel=1e-12)
    assert beta <= 1.0


def test_f_pure_power_passes():
    cfg = make_cfg()
    rep = check_f_hypotheses(cfg.nonlinearity, cfg)
    assert rep.all_pass("f")
    # (f7) quantity (1 - q+/r)|t|^r is nonnegative and vanishes only at 0
    assert rep["f7"].constants["min"] >= 0


def test_f_log_example_passes():
    cfg = make_cfg(nl=NonlinearitySpec("log-example", r1=4, r2=4, a=3))
    rep = check_f_hypotheses(cfg.nonlinearity, cfg)
    for name in ("f1", "f2", "f3", "f4", "f5", "f6", "f7"):
        assert rep.verdict(name) == "pass", rep[name].to_line()


def test_f3_fails_for_critical_power():
    cfg = make_cfg(nl=NonlinearitySpec("pure-power", r=2.2))
    rep = check_f_hypotheses(cfg.nonlinearity, cfg)
    assert rep.verdict("f3") == "fail"
    assert rep.verdict("f6") == "fail"


def test_f4_fails_for_sublinear_growth_near_zero():
    # F ~ |t|^1.5 / 1.5 near 0 is not o(|t|^p) for p = 1.8
    cfg = make_cfg(nl=NonlinearitySpec("power-sum", r1=1.5, r2=4))
    assert check_f_hypotheses(cfg.nonlinearity, cfg).verdict("f4") == "fail"


def test_f_grid_must_span_range():
    cfg = make_cfg()
    with pytest.raises(ValueError):
        check_f_hypotheses(cfg.nonlinearity, cfg, t_grid=np.logspace(-3, 3, 50))


def test_report_text_roundtrip():
    rep = check_all(make_cfg(n=9))
    text = rep.to_text()
    assert text.count("\n") == len(rep.entries)
    assert all(line.startswith("hypothesis=") for line in text.splitlines())
    assert isinstance(rep, HypothesisReport) and not rep.failures


def test_f5_window_values():
    lo, hi = f5_window(1.5, 2, 4)
    assert lo == pytest.approx(10 / 3, abs=1e-12) and hi == 4
    lo, hi = f5_window(1.8, 2, 4)
    assert lo == pytest.approx(22 / 9, abs=1e-12)
    assert f5_window(1.5, 2, 1.5) == (0.0, 1.5)
    with pytest.raises(HypothesisError):
        f5_window(1.5, 2, 6.0)


def test_interpolation_values():
    res = interpolation_exponent(4, 6, 3.5)
    assert res.t == pytest.approx(0.3, abs=1e-12) and res.t_times_r == pytest.approx(1.2, abs=1e-12)
    res = interpolation_exponent(4, 6, 3, p_minus=1.5)
    assert res.t == pytest.approx(0.5, abs=1e-12) and res.t_times_r == pytest.approx(2.0, abs=1e-12)
    assert res.below_p_minus is False
    assert 3 < f5_window(1.5, 2, 4)[0]
    assert interpolation_exponent(4, 6, 4 - 1e-9).t < 1e-8
    with pytest.raises(HypothesisError):
        interpolation_exponent(4, 6, 4)


def _random_admissible(rng):
    N = int(rng.integers(2, 5))
    p = rng.uniform(1.05, N - 0.05)
    p_star = N * p / (N - p)
    r = rng.uniform(p, p_star)
    return p, N, r, p_star


def test_window_nonempty_random(rng):
    for _ in range(1000):
        p, N, r, _ = _random_admissible(rng)
        lo, hi = f5_window(p, N, r)
        assert lo < hi


def test_interpolation_random(rng):
    for _ in range(1000):
        p, N, r, p_star = _random_admissible(rng)
        lo, hi = f5_window(p, N, r)
        l = rng.uniform(max(lo, 1e-9), hi)
        if not lo < l < hi:
            continue
        res = interpolation_exponent(r, p_star, l, p_minus=p)
        assert abs(res.t / p_star + (1 - res.t) / l - 1 / r) <= 1e-12
        assert 0 < res.t < 1
        assert res.below_p_minus


def _brute_log_holder(e):
    g = e.grid
    pts = g.nodes.reshape(-1, g.dim)
    vals = e.values.ravel()
    best = 0.0
    for i, j in itertools.combinations(range(len(vals)), 2):
        d = np.linalg.norm(pts[i] - pts[j])
        if d < 0.5:
            best = max(best, abs(vals[i] - vals[j]) * abs(np.log(d)))
    return best


def test_log_holder_constant_is_zero():
    assert log_holder_diagnostic(ExponentField.from_expr(unit_square(9), "1.7")) == 0.0


def test_log_holder_linear_exponent():
    e = ExponentField.from_expr(unit_square(9), "1.5 + 0.3*x1")
    est = log_holder_diagnostic(e)
    assert est == pytest.approx(_brute_log_holder(e), rel=1e-13)
    # sup of d |log d| on (0, 1/2) is 1/e
    assert est <= 0.3 / np.e
    fine = log_holder_diagnostic(ExponentField.from_expr(unit_square(17), "1.5 + 0.3*x1"))
    assert fine <= 1.1 * est


def test_log_holder_sine_matches_brute_force():
    e = ExponentField.from_expr(unit_square(7), "1.4 + 0.2*sin(2*pi*x1) + 0.1*x2")
    assert log_holder_diagnostic(e) == pytest.approx(_brute_log_holder(e), rel=1e-13)
