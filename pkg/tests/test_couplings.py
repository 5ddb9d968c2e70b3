import math

import numpy as np
import pytest

from couplinglab import couplings as C
from couplinglab.estimators import mc_expectation
from couplinglab import functions as F
from couplinglab.sde import get_spec


@pytest.mark.parametrize("K", [-2.0, -1.0, 0.0, 1.0])
def test_eta_identity(K):
    sched = C.EtaSchedule(K, 1.0, 1.3)
    assert abs(sched.identity_residual()) < 1e-8
    # l2 mass against quadrature of eta^2
    grid = np.linspace(0, 1, 200001)
    vals = sched(grid) ** 2
    assert np.trapezoid(vals, grid) == pytest.approx(sched.l2_mass(), rel=1e-8)


def test_xi_limit():
    s = np.linspace(0, 1, 11)
    np.testing.assert_allclose(C.xi(1e-10, 1.0, s), 1 - s, atol=1e-9)
    np.testing.assert_allclose(C.xi(-2.0, 1.0, s), (1 - np.exp(-2 * (s - 1))) / -2.0)


def test_same_start_couples_immediately():
    for make in (C.couple_synchronous, C.couple_forced, C.couple_girsanov_tt):
        run = make(get_spec("ou1"), [0.3], [0.3], 0.01, 0.5, 20, seed=1)
        assert np.all(run.coupling_step == 0)
        np.testing.assert_array_equal(run.x_final, run.y_final)
        np.testing.assert_array_equal(run.log_weights, 0.0)
        assert run.entropy()[0] == 0.0
        assert np.all(C.coupling_time_tail(run, [0.0, 0.5]).tail == 0)


def test_synchronous_bm_never_couples():
    run = C.couple_synchronous(get_spec("bm1"), [0.0], [1.0], 0.01, 1.0, 50, seed=2, store_paths=True)
    np.testing.assert_allclose(run.x_paths - run.y_paths, -1.0, atol=1e-12)
    assert np.all(C.coupling_time_tail(run, [0.5, 1.0]).tail == 1)


def test_synchronous_ou_contraction():
    h = 1e-3
    run = C.couple_synchronous(get_spec("ou1"), [0.0], [1.0], h, 2.0, 200, seed=3)
    d2 = np.mean(np.sum((run.x_final - run.y_final) ** 2, axis=1))
    assert d2 <= math.exp(-2 * 2) * (1 + 10 * h)


def test_forced_coupling_glues_and_weights():
    run = C.couple_forced(get_spec("bm1"), [0.0], [1.0], 1e-3, 1.0, 2000, seed=4, store_paths=True)
    assert run.coupled_fraction >= 0.99
    assert not run.flags["coarse_discretization"]
    for i in np.flatnonzero(run.coupled)[:50]:
        k = run.coupling_step[i]
        np.testing.assert_array_equal(run.x_paths[i, k:], run.y_paths[i, k:])
    m, se = run.weight_mean()
    assert abs(m - 1) <= 4 * se
    tail = C.coupling_time_tail(run, [1.0])
    assert tail.tail[0] <= 0.01


def test_coarse_forced_run_is_flagged(monkeypatch):
    # a coarse grid still couples (band and overshoot rule); the flag logic
    # is exercised by demanding more than any run can give
    run = C.couple_forced(get_spec("bm1"), [0.0], [1.0], 0.25, 1.0, 200, seed=5)
    assert run.coupled_fraction == 1.0
    monkeypatch.setattr(C, "FORCED_FAIL_LIMIT", -1.0)
    with pytest.warns(UserWarning):
        run = C.couple_forced(get_spec("bm1"), [0.0], [1.0], 0.25, 1.0, 200, seed=5)
    assert run.flags["coarse_discretization"]


def test_forced_needs_unit_noise():
    with pytest.raises(ValueError):
        C.couple_forced(get_spec("mod_ou1"), [0.0], [1.0], 0.01, 1.0, 10, 0)


def test_forced_second_moment_of_weight():
    # log E R^2 against the exponent from the Harnack proof, p = 2
    spec = get_spec("ou1")
    run = C.couple_forced(spec, [0.0], [1.0], 1e-3, 1.0, 4000, seed=6)
    K, t, p = spec.K_drift_claim, 1.0, 2.0
    bound = K * p / ((p - 1) * (1 - math.exp(-K * t)))
    r2 = np.mean(run.weights ** 2)
    assert math.log(r2) <= bound + 0.05


@pytest.mark.parametrize("make", [C.couple_forced, C.couple_girsanov_tt])
def test_weighted_marginal_of_y(make):
    # E[R f(Y_t)] reproduces P_t f(y0) from an independent simulation
    spec, n, h = get_spec("ou1"), 20000, 1e-3
    run = make(spec, [0.0], [1.0], h, 1.0, n, seed=7)
    f = F.bump(1, [0.5])
    vals = run.weights * f.f(run.y_final)
    est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(n)
    ref = mc_expectation(spec, [1.0], f, 1.0, h, n, seed=8)
    assert abs(est - ref.estimate) <= 4 * math.hypot(se, ref.std_error)


def test_girsanov_entropy_bound():
    spec = get_spec("ou1")
    run = C.couple_girsanov_tt(spec, [0.0], [1.0], 1e-3, 1.0, 20000, seed=9)
    ent, se = run.entropy()
    assert ent <= 1 / (math.e ** 2 - 1) + 3 * se
    # the weighted mass of uncoupled paths is negligible
    assert np.mean(run.weights * ~run.coupled) <= 0.01
    m, wse = run.weight_mean()
    assert abs(m - 1) <= 4 * wse


def test_cc_bound_on_test_functions():
    run = C.couple_forced(get_spec("bm1"), [0.0], [1.0], 1e-3, 1.0, 5000, seed=10)
    tail = C.coupling_time_tail(run, [0.5, 1.0])
    for f in (F.bump(1, [0.0]), F.smoothstep(1, [2.0])):
        diff = abs(f.f(run.x_final).mean() - f.f(run.y_final).mean())
        assert diff <= f.osc * (tail.tail[-1] + 3 * tail.se[-1]) + 1e-12


def test_csv_exports(tmp_path):
    run = C.couple_forced(get_spec("bm1"), [0.0], [1.0], 0.01, 1.0, 5, seed=0)
    out = tmp_path / "run.csv"
    run.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,coupling_step,log_weight" and len(lines) == 6
    tail = C.coupling_time_tail(run, [0.5, 1.0]).csv().splitlines()
    assert tail[0] == "t,tail,se,lower,upper" and len(tail) == 3
