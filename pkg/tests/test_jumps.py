import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from couplinglab import functions as F
from couplinglab import jumps as J


def series_tv_by_quadrature(d, lam, t):
    """Variation of the compound Poisson laws by integrating |p_x - p_y|."""
    n = np.arange(1, 80)
    pmf = stats.poisson.pmf(n, lam * t)
    z = np.linspace(-60, 60, 400001)
    dens = lambda c: (pmf[:, None] * stats.norm.pdf(z[None, :], c, np.sqrt(n)[:, None])).sum(0)
    cont = np.trapezoid(np.abs(dens(0.0) - dens(d)), z)
    return cont + 2 * math.exp(-lam * t)


def test_exact_tv_series_matches_quadrature():
    for t in (0.5, 2.0, 8.0):
        assert J.compound_poisson_gaussian_tv(1.0, 1.0, t) == pytest.approx(series_tv_by_quadrature(1.0, 1.0, t), abs=1e-7)
    assert J.compound_poisson_gaussian_tv(0.0, 1.0, 3.0) == 0.0


def test_spec_validation():
    with pytest.raises(ValueError):
        J.JumpSpec(A=[[0.5]])
    with pytest.raises(ValueError):
        J.JumpSpec(dim=2, A=[[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        J.JumpSpec(rho0="cauchy")
    with pytest.raises(ValueError):
        J.JumpSpec(lambda0=0.0)
    with pytest.raises(ValueError):
        J.JumpSpec(dim=2, extra_levy="stable_surrogate")
    # skew-symmetric A is allowed: <Ax, x> = 0
    J.JumpSpec(dim=2, A=[[0.0, 1.0], [-1.0, 0.0]], rho0="triweight")


@pytest.mark.parametrize("rho0", ["gaussian", "triweight"])
def test_levy_mass(rho0):
    assert J.levy_mass(J.JumpSpec(dim=1, rho0=rho0, lambda0=2.5)) == pytest.approx(2.5, abs=1e-6)
    assert J.levy_mass(J.JumpSpec(dim=2, rho0=rho0, lambda0=0.7)) == pytest.approx(0.7, abs=1e-6)


def test_inverse_density_hypothesis():
    assert math.isfinite(J.inverse_density_integral(J.JumpSpec(rho0="triweight", eps=0.5)))
    assert J.inverse_density_integral(J.JumpSpec(rho0="triweight", eps=1.0)) == math.inf
    assert math.isfinite(J.inverse_density_integral(J.JumpSpec(eps=3.0)))


def test_no_jump_probability():
    n, t = 40000, 0.3
    b = J.simulate_jump(J.JumpSpec(), [0.0], t, n, seed=1, keep_jumps=False)
    p = math.exp(-t)
    assert abs(np.mean(b.counts == 0) - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_compound_poisson_moments():
    n, t = 40000, 1.0
    b = J.simulate_jump(J.JumpSpec(), [0.7], t, n, seed=2)
    x = b.final[:, 0]
    # E X = x, Var X = lambda t E xi^2 = 1, Var of sample variance ~ (m4 - 1)/n with m4 = E L^4 = 3t^2 + 3t
    assert abs(x.mean() - 0.7) <= 4 * math.sqrt(1 / n)
    assert abs(x.var(ddof=1) - 1.0) <= 4 * math.sqrt((6.0 - 1.0) / n)
    c = b.counts
    assert abs(c.mean() - t) <= 4 * math.sqrt(t / n)
    assert abs(c.var(ddof=1) - t) <= 4 * math.sqrt(t / n + 2 * t * t / n)
    assert stats.kstest(b.sizes[:, 0], "norm").pvalue > 1e-3


def test_triweight_sizes():
    b = J.simulate_jump(J.JumpSpec(rho0="triweight", scale=2.0), [0.0], 3.0, 5000, seed=3)
    cdf = lambda z: stats.beta.cdf((np.asarray(z) / 2.0 + 1) / 2, 4, 4)
    assert stats.kstest(b.sizes[:, 0], cdf).pvalue > 1e-3
    assert np.all(np.abs(b.sizes) < 2.0)


def test_ou_mean():
    n, t, x = 40000, 1.5, 2.0
    b = J.simulate_jump(J.JumpSpec(A=[[-1.0]]), [x], t, n, seed=4, keep_jumps=False)
    # Var = lambda int_0^t e^{-2s} ds
    var = (1 - math.exp(-2 * t)) / 2
    assert abs(b.final.mean() - x * math.exp(-t)) <= 4 * math.sqrt(var / n)


def test_jump_times_and_paths():
    spec = J.JumpSpec(dim=2, A=[[-0.5, 0.2], [-0.2, -0.5]])
    b = J.simulate_jump(spec, [1.0, -1.0], 2.0, 300, seed=5)
    for i in range(b.n_paths):
        tau = b.times[b.offsets[i]:b.offsets[i + 1]]
        assert np.all(np.diff(tau) > 0) and np.all((tau >= 0) & (tau <= 2.0))
        np.testing.assert_allclose(b.state_at(i, 2.0), b.final[i], atol=1e-12)


def test_simulation_is_prefix_consistent_and_deterministic():
    spec = J.JumpSpec()
    a = J.simulate_jump(spec, [0.0], 1.0, 5000, seed=6)
    b = J.simulate_jump(spec, [0.0], 1.0, 100, seed=6)
    np.testing.assert_array_equal(a.final[:100], b.final)
    np.testing.assert_array_equal(a.counts[:100], b.counts)
    c = J.simulate_jump(spec, [0.0], 1.0, 5000, seed=6)
    np.testing.assert_array_equal(a.final, c.final)


def test_flow_linearity():
    spec = J.JumpSpec(dim=2, A=[[-1.0, 0.3], [-0.3, -0.2]])
    x, y = np.array([1.0, 2.0]), np.array([-0.5, 0.4])
    bx = J.simulate_jump(spec, x, 1.7, 500, seed=7, keep_jumps=False)
    by = J.simulate_jump(spec, y, 1.7, 500, seed=7, keep_jumps=False)
    from scipy.linalg import expm
    np.testing.assert_allclose(bx.final - by.final, np.tile(expm(spec.A * 1.7) @ (x - y), (500, 1)), atol=1e-12)


def test_expm_batch_matches_scipy():
    from scipy.linalg import expm
    A = np.array([[-1.0, 2.0], [0.0, -1.0]])  # defective: falls back to scipy
    out = J.expm_batch(A, [0.3, 1.1])
    np.testing.assert_allclose(out[1], expm(1.1 * A), atol=1e-12)
    B = np.array([[-0.5, 0.2], [-0.2, -0.5]])
    np.testing.assert_allclose(J.expm_batch(B, [2.0])[0], expm(2.0 * B), atol=1e-12)


@pytest.mark.parametrize("rho0", ["gaussian", "triweight"])
@pytest.mark.parametrize("a", [0.0, 1.0])
def test_derivative_against_finite_differences(rho0, a):
    spec = J.JumpSpec(A=[[-a]], rho0=rho0)
    f = F.bump(1, [0.5])
    est = J.jump_derivative(spec, [0.3], f, 1.0, 40000, seed=8).component(0)
    fd = J.jump_fd_oracle(spec, [0.3], f, 1.0, 40000, seed=9).component(0)
    assert est.against(fd.estimate, fd.std_error, k=3.0).verdict


def test_derivative_exact_gaussian_case():
    # A = 0, Gaussian jumps, f = bump: P1 f(x) = sum_n p_n E f(x + N(0, n)), in closed form
    f, x, t = F.bump(1, [0.5]), 0.3, 1.0
    n = np.arange(1, 60)
    pmf = stats.poisson.pmf(n, t)
    s = 1.0 + n
    grad = (pmf * -(x - 0.5) / s * np.sqrt(1 / s) * np.exp(-0.5 * (x - 0.5) ** 2 / s)).sum()
    est = J.jump_derivative(J.JumpSpec(), [x], f, t, 100000, seed=10).component(0)
    assert est.against(grad, k=4.0).verdict
    # the opposite sign convention is rejected
    assert not est.against(-grad, k=4.0).verdict


def test_derivative_constant_and_translation():
    spec = J.JumpSpec()
    c = J.jump_derivative(spec, [0.3], F.constant(1, 2.0), 1.0, 20000, seed=11).component(0)
    assert c.against(0.0, k=4.0).verdict
    a = J.jump_derivative(spec, [0.3], F.bump(1, [0.5]), 1.0, 5000, seed=12)
    b = J.jump_derivative(spec, [2.3], F.bump(1, [2.5]), 1.0, 5000, seed=12)
    np.testing.assert_allclose(a.estimate, b.estimate, atol=1e-12)


def test_tv_decay_small_case_and_errors():
    spec = J.JumpSpec()
    p = J.jump_tv(spec, [0.0], [1.0], 0.5, 20000, seed=13)
    assert p.tv >= p.lower_bound - 3 * p.se
    with pytest.raises(ValueError):
        J.tv_decay_experiment(spec, [0.0], [1.0], [2.0, 4.0, 8.0], 1000, 0)
    with pytest.raises(ValueError):
        J.tv_decay_experiment(spec, [0.0], [1.0], [1.5, 10.0, 64.0], 1000, 0)
    with pytest.raises(ValueError):
        J.jump_tv(J.JumpSpec(dim=2), [0.0, 0.0], [1.0, 0.0], 1.0, 100, 0)


def test_decay_curve_csv_and_status():
    spec = J.JumpSpec(rho0="triweight", eps=1.0)
    c = J.tv_decay_experiment(spec, [0.0], [1.0], [2.0, 8.0, 64.0], 5000, seed=14)
    assert c.status == "exploratory"
    lines = c.csv().splitlines()
    assert lines[0] == "t,tv_hat,se,lower_bound" and len(lines) == 4
    same = J.jump_tv(J.JumpSpec(), [0.0], [0.0], 4.0, 20000, seed=15)
    assert same.tv <= 3 * same.se + same.budget and same.lower_bound == 0.0


def test_stable_surrogate_runs():
    spec = J.JumpSpec(extra_levy="stable_surrogate")
    b = J.simulate_jump(spec, [0.0], 1.0, 2000, seed=16, keep_jumps=False)
    assert np.all(np.isfinite(b.final))
    assert J.tv_decay_experiment(spec, [0.0], [1.0], [2.0, 8.0, 64.0], 2000, 17).status == "exploratory"


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
def test_alpha_gamma_closed_form(beta):
    for t in (0.1, 1.0, 10.0):
        a = J.bernstein_alpha("power", t, c=1.3, beta=beta)
        assert a.value == pytest.approx(J.alpha_power_closed_form(beta, 1.3, t), rel=1e-9)
        assert a.rel_err <= 1e-6


def test_alpha_examples():
    assert J.bernstein_alpha("power", 4.0, beta=1.0).value == pytest.approx(0.5, rel=1e-12)
    rep = J.alpha_rate_check(1.0, 1.0, (0.1, 1.0, 10.0))
    assert rep.verdict and rep.constant == pytest.approx(2.0, abs=1e-6)
    lo, hi = J.alpha_rate_check(0.5).constant, J.alpha_rate_check(1.5).constant
    assert abs(lo - hi) > 0.1
    assert rep.csv().splitlines()[0] == "t,alpha,rel_err"
    assert J.bernstein_alpha("log", 1.0).value == pytest.approx(math.pi, rel=1e-10)
    assert not J.bernstein_alpha("log", 0.5).finite
    with pytest.raises(ValueError):
        J.bernstein_alpha("power", 1.0, beta=2.5)
    with pytest.raises(ValueError):
        J.bernstein_alpha("cubic", 1.0)


@given(st.floats(0.3, 1.9), st.floats(0.05, 20.0))
def test_alpha_doubling(beta, t):
    a1 = J.bernstein_alpha("power", t, beta=beta).value
    a2 = J.bernstein_alpha("power", 2 * t, beta=beta).value
    assert a2 / a1 == pytest.approx(2 ** (-1 / beta), rel=1e-5)


@given(st.sampled_from(["power", "log"]), st.floats(0.6, 30.0))
def test_alpha_decreasing(sid, t):
    assert J.bernstein_alpha(sid, t * 1.5).value < J.bernstein_alpha(sid, t).value
