import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from couplinglab import couplings as C
from couplinglab import estimators as E
from couplinglab import functions as F
from couplinglab.report import CheckRow, EstimateReport, InequalityReport
from couplinglab.sde import get_spec


@pytest.mark.parametrize("tf, dim", [
    (F.bump(1, [0.3], 0.7), 1), (F.bump(2, [0.0, 1.0]), 2), (F.smoothstep(1, [2.0]), 1),
    (F.smoothstep(2, [1.0, -1.0]), 2), (F.constant(1, 2.0), 1), (F.coord(2, 1), 2),
])
def test_metadata_on_probe_grid(tf, dim):
    assert F.verify_metadata(tf, dim, n=40001 if dim == 1 else 200000).ok


@pytest.mark.parametrize("tf", [F.bump(1, [0.4], 0.8, 0.5), F.explin(1, [0.7]), F.constant(1, 3.0), F.coord(1)])
def test_gaussian_means_by_quadrature(tf):
    m, var = 0.3, 0.6
    dens = lambda z: math.exp(-(z - m) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)
    val, _ = integrate.quad(lambda z: float(tf.f(np.array([[z]]))[0]) * dens(z), -30, 30, limit=200)
    assert tf.gaussian_mean(np.array([m]), var) == pytest.approx(val, rel=1e-9, abs=1e-12)


def test_power_closed_form():
    f = F.explin(1, [0.5])
    g = F.power(f, 3.0)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(g.f(x), f.f(x) ** 3)
    with pytest.raises(ValueError):
        F.power(F.coord(1), 2.0)
    with pytest.raises(ValueError):
        F.make("nope", 1)


def test_bismut_exact_cases():
    n, h = 20000, 1e-3
    bm = E.bismut_gradient(get_spec("bm1"), [0.0], [1.0], F.coord(1), 1.0, h, n, seed=1)
    assert bm.against(1.0).verdict
    ou = E.bismut_gradient(get_spec("ou1"), [0.5], [1.0], F.coord(1), 1.0, h, n, seed=2)
    assert ou.against(math.exp(-1.0)).verdict
    const = E.bismut_gradient(get_spec("ou1"), [0.5], [1.0], F.constant(1, 2.0), 1.0, h, n, seed=3)
    assert const.against(0.0).verdict
    assert const.std_error > 0


def test_bismut_against_finite_differences():
    spec, f, n = get_spec("ou1"), F.bump(1, [0.5]), 20000
    est = E.bismut_gradient(spec, [0.5], [1.0], f, 1.0, 1e-3, n, seed=4)
    fd = E.finite_difference_oracle(spec, [0.5], [1.0], f, 1.0, 1e-3, n, seed=5, delta=0.05)
    rep = est.against(fd.estimate, fd.std_error, k=3.0, budget=E.fd_bias_budget(f, [1.0], 0.05))
    assert rep.verdict


def test_bismut_rejects_non_differentiable_and_non_unit_noise():
    with pytest.raises(ValueError):
        E.bismut_gradient(get_spec("mod_ou1"), [0.0], [1.0], F.coord(1), 1.0, 0.1, 10, 0)


def test_fd_bias_shrinks_with_delta():
    # exact P_t f for exp-linear f under OU: e^{a m + a^2 v / 2}, m = x e^{-t}
    spec, a, x, t = get_spec("ou1"), 1.5, 0.2, 1.0
    mean, var = spec.gaussian_law([x], t)
    f = F.explin(1, [a])
    exact = a * math.exp(-t) * f.gaussian_mean(mean, var)
    Pt = lambda z: f.gaussian_mean(spec.gaussian_law([z], t)[0], var)
    bias = [abs((Pt(x + d) - Pt(x - d)) / (2 * d) - exact) for d in (0.1, 0.05)]
    assert bias[0] / bias[1] == pytest.approx(4.0, rel=0.01)


def test_harnack_exponent_closed_form():
    for p in (1.5, 2.0, 4.0):
        for K in (-2.0, -1.0, 0.5, 1.0):
            for t in (0.5, 1.0, 2.0):
                want = p * K / (2 * (p - 1) * (1 - math.exp(-K * t)))
                assert E.harnack_exponent(p, K, t, 1.0) == pytest.approx(want, rel=1e-12)
    assert E.harnack_exponent(2.0, 0.0, 2.0, 1.0) == pytest.approx(2.0 / (2 * 2.0))
    # decreasing in p
    vals = [E.harnack_exponent(p, 1.0, 1.0, 1.0) for p in (1.5, 2, 3, 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_harnack_analytic_ou():
    rep = E.harnack_verify(get_spec("ou1"), [0.0], [1.0], F.explin(1), 2.0, 1.0)
    assert rep.analytic.verdict and rep.analytic.slack > 1e-9
    assert rep.mc is None
    with pytest.raises(ValueError):
        E.harnack_verify(get_spec("ou1"), [0.0], [1.0], F.explin(1), 1.0, 1.0)


def test_harnack_jensen_case():
    # x = y and constant f: equality
    rep = E.harnack_verify(get_spec("ou1"), [0.3], [0.3], F.constant(1, 2.0), 2.0, 1.0)
    assert rep.analytic.lhs == pytest.approx(rep.analytic.rhs, rel=1e-14)
    rep = E.harnack_verify(get_spec("ou1"), [0.3], [0.3], F.explin(1), 2.0, 1.0)
    assert rep.analytic.slack > 0


def test_harnack_mc_bm_bump():
    rep = E.harnack_verify(get_spec("bm1"), [0.0], [1.0], F.bump(1, [0.0], offset=0.1), 2.0, 1.0,
                           h=1e-2, n_paths=20000, seed=6)
    assert rep.mc.verdict and rep.verdict


def test_log_harnack_constant_and_analytic():
    assert E.log_harnack_constant(-2.0, 1.0, 1.0, 1.0) == pytest.approx(1 / (math.e ** 2 - 1))
    rep = E.log_harnack_verify(get_spec("ou1"), [0.0], [1.0], F.explin(1), 1.0)
    assert rep.analytic.verdict
    one = E.log_harnack_verify(get_spec("ou1"), [0.0], [1.0], F.constant(1, 1.0), 1.0)
    assert one.analytic.lhs == 0.0 and one.analytic.rhs >= 0.0


def test_log_harnack_mc_and_input_check():
    rep = E.log_harnack_verify(get_spec("ou1"), [0.0], [1.0], F.bump(1, [0.0], offset=1.0), 1.0,
                               h=1e-2, n_paths=20000, seed=7)
    assert rep.mc.verdict
    with pytest.raises(ValueError):
        E.log_harnack_verify(get_spec("ou1"), [0.0], [1.0], F.bump(1, [0.0]), 1.0, n_paths=100)


def test_gradient_bound():
    lin = E.gradient_bound_check(get_spec("bm1"), [0.0], F.coord(1), 1.0, 1e-2, 2000, seed=8)
    assert lin.lhs == pytest.approx(lin.rhs, rel=1e-9)
    ou = E.gradient_bound_check(get_spec("ou1"), [0.0], F.coord(1), 1.0, 1e-3, 2000, seed=8)
    # Euler contracts by (1-h)^n, slightly below e^{-t}
    assert ou.lhs == pytest.approx(math.exp(-2.0), rel=5e-3) and ou.verdict
    bump = E.gradient_bound_check(get_spec("ou1"), [0.3], F.bump(1, [0.0]), 1.0, 1e-3, 20000, seed=9)
    assert bump.verdict and bump.lhs < bump.rhs


def test_gaussian_tv_and_histogram():
    assert E.gaussian_tv(0.0, 1.0) == 0.0
    g = np.random.default_rng(0)
    n = 100000
    a, b = g.normal(size=n), g.normal(size=n) + 1.0
    hist = E.histogram_tv(a, b, E.gaussian_density_lipschitz(1.0))
    exact = E.gaussian_tv(1.0, 1.0)
    assert abs(hist.tv - exact) <= 3 * hist.se + hist.budget
    same = E.histogram_tv(a, g.normal(size=n), E.gaussian_density_lipschitz(1.0))
    assert same.tv <= 3 * same.se + same.budget
    two = E.histogram_tv(g.normal(size=(n, 2)), g.normal(size=(n, 2)) + [1.0, 0.0],
                         E.gaussian_density_lipschitz(1.0, 2))
    assert abs(two.tv - exact) <= 3 * two.se + two.budget


def test_tv_from_tail_cases():
    same = C.couple_synchronous(get_spec("ou1"), [0.2], [0.2], 1e-2, 1.0, 2000, seed=1)
    b = E.tv_from_tail(same)
    assert np.all(b.bound == 0) and b.report.verdict
    forced = C.couple_forced(get_spec("ou1"), [0.0], [1.0], 1e-3, 1.0, 2000, seed=2)
    b = E.tv_from_tail(forced)
    assert b.bound[-1] <= 0.02 and b.report.verdict
    sync = C.couple_synchronous(get_spec("bm1"), [0.0], [1.0], 1e-2, 1.0, 20000, seed=3)
    b = E.tv_from_tail(sync, density_lipschitz=E.gaussian_density_lipschitz(1.0))
    assert b.bound[-1] == 2.0
    assert abs(b.hist.tv - E.gaussian_tv(1.0, 1.0)) <= 3 * b.hist.se + b.hist.budget
    assert b.csv().startswith("t,bound,se\n")


def test_report_rules():
    r = EstimateReport(1.0, 0.1, 100).against(1.25, k=3.0)
    assert r.verdict and r.margin_se == pytest.approx(0.5, abs=1e-6)
    assert not EstimateReport(1.0, 0.1, 100).against(1.45, k=4.0).verdict
    assert InequalityReport(1.0, 1.0).verdict and not InequalityReport(1.0 + 1e-8, 1.0).verdict
    row = InequalityReport(0.5, 1.0, 0.1, 10).row("x", 3)
    assert row.csv() == "x,0.5,1.0,5.0,pass,10,3"
    assert not CheckRow("e", 0, 0, 0, "exploratory-fail", 1, 1).counts


@given(st.floats(-3, 3), st.floats(0.05, 5.0))
def test_gaussian_tv_range(d, var):
    tv = E.gaussian_tv(d, var)
    assert 0.0 <= tv <= 2.0
    assert E.gaussian_tv(-d, var) == tv
