import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from couplinglab import rng
from couplinglab.sde import (DiffusionSpec, SimulationError, check_ellipticity, check_one_sided_K,
                             get_spec, n_steps, simulate)


def test_brownian_moments():
    n = 20000
    b = simulate(get_spec("bm2"), [0.0, 0.0], 1e-2, 1.0, n, seed=3, store=False)
    assert np.all(np.abs(b.final.mean(axis=0)) < 4 / math.sqrt(n))
    cov = np.cov(b.final.T)
    # sd of a sample variance is about sqrt(2/n)
    np.testing.assert_allclose(cov, np.eye(2), atol=4 * math.sqrt(2 / n))


@pytest.mark.parametrize("x0", [0.0, 1.5, -2.0])
def test_ou_moments(x0):
    n, t = 20000, 1.0
    b = simulate(get_spec("ou1"), [x0], 1e-3, t, n, seed=11, store=False)
    mean, var = get_spec("ou1").gaussian_law([x0], t)
    se = math.sqrt(var / n)
    assert abs(b.final.mean() - mean[0]) < 4 * se + 1e-3
    assert abs(b.final.var(ddof=1) - var) < 4 * var * math.sqrt(2 / n) + 2e-3


def test_bundle_shapes_and_start():
    b = simulate(get_spec("sin_ou2"), [0.5, -1.0], 0.1, 1.0, 7, seed=1)
    assert b.states.shape == (7, 11, 2)
    assert b.increments.shape == (7, 10, 2)
    np.testing.assert_array_equal(b.states[:, 0], np.tile([0.5, -1.0], (7, 1)))
    assert b.n_flagged == 0


def test_determinism_and_prefix_consistency():
    a = simulate(get_spec("ou2"), [1.0, 0.0], 0.01, 0.5, 50, seed=99)
    b = simulate(get_spec("ou2"), [1.0, 0.0], 0.01, 0.5, 50, seed=99)
    c = simulate(get_spec("ou2"), [1.0, 0.0], 0.01, 0.5, 20, seed=99)
    d = simulate(get_spec("ou2"), [1.0, 0.0], 0.01, 0.5, 20, seed=100)
    np.testing.assert_array_equal(a.states, b.states)
    # path i does not depend on how many paths are simulated
    np.testing.assert_array_equal(a.increments[:20], c.increments)
    assert not np.array_equal(c.final, d.final)


def test_increments_reproducible_from_seed():
    b = simulate(get_spec("bm1"), [0.0], 0.25, 1.0, 5, seed=8)
    for k in range(4):
        np.testing.assert_array_equal(b.increments[:, k], rng.normals(8, rng.BROWNIAN, k, 5, 1) * 0.5)


def test_synchronous_ou_difference():
    h, t = 1e-3, 1.0
    x = simulate(get_spec("ou1"), [1.0], h, t, 100, seed=5, store=False).final
    y = simulate(get_spec("ou1"), [0.0], h, t, 100, seed=5, store=False).final
    np.testing.assert_allclose(np.abs(x - y), math.exp(-t), atol=5 * h)


def test_refinement_is_first_order():
    # E X_t^2 for OU is known; Euler's weak error is O(h)
    spec, t, n = get_spec("ou1"), 1.0, 40000
    mean, var = spec.gaussian_law([1.0], t)
    exact = mean[0] ** 2 + var
    errs = []
    for h in (0.1, 0.05):
        m = np.mean(simulate(spec, [1.0], h, t, n, seed=4, store=False).final ** 2)
        errs.append(abs(m - exact))
    assert errs[1] < 0.1 * 0.05 * 10  # |error| <= C h with C = 10
    assert errs[0] < 0.1 * 10


def test_step_validation():
    assert n_steps(1e-3, 1.0) == 1000
    with pytest.raises(ValueError):
        n_steps(0.3, 1.0)
    with pytest.raises(ValueError):
        n_steps(0.0, 1.0)
    with pytest.raises(ValueError):
        simulate(get_spec("bm1"), [0.0, 1.0], 0.1, 1.0, 3, 0)
    with pytest.raises(ValueError):
        get_spec("nope")


def test_divergence_is_an_error():
    spec = DiffusionSpec(1, "linear", drift_params={"A": [[2e5]]})
    with pytest.raises(SimulationError):
        simulate(spec, [1.0], 0.1, 10.0, 10, 0, store=False)


def test_one_sided_constants():
    aa = check_one_sided_K(get_spec("ou1"), 500, 3.0, 0, form="AA")
    assert aa.K_hat == pytest.approx(-2.0, abs=1e-9) and aa.passed
    k = check_one_sided_K(get_spec("ou2"), 500, 3.0, 0, form="K")
    assert k.K_hat == pytest.approx(-1.0, abs=1e-9) and k.passed
    # a dishonest claim fails
    liar = DiffusionSpec(1, "ou", K_claim=-3.0, K_drift_claim=-1.0)
    assert not check_one_sided_K(liar, 500, 3.0, 0).passed
    mod = get_spec("mod_ou1")
    assert check_one_sided_K(mod, 2000, 5.0, 0).passed
    assert check_ellipticity(mod, 2000, 5.0, 0)


def test_sin_drift_against_dense_grid():
    # dense grid oracle of the (K) ratio on [-4, 4]^2 pairs in 1-D
    spec = get_spec("sin_ou1")
    g = np.linspace(-4, 4, 801)
    x, y = np.meshgrid(g, g)
    keep = x != y
    zx, zy = -x + 0.5 * np.sin(x), -y + 0.5 * np.sin(y)
    grid_max = ((zx - zy)[keep] / (x - y)[keep]).max()
    sampled = check_one_sided_K(spec, 5000, 4.0, 1, form="K")
    assert sampled.K_hat <= grid_max + 1e-9
    assert sampled.K_hat <= spec.K_drift_claim + 1e-6
    assert grid_max <= spec.K_drift_claim + 1e-9


def test_csv_export(tmp_path):
    b = simulate(get_spec("bm2"), [0.0, 0.0], 0.5, 1.0, 2, seed=0)
    out = tmp_path / "paths.csv"
    b.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,step,coord,value"
    assert len(lines) == 1 + 2 * 3 * 2
    with pytest.raises(ValueError):
        simulate(get_spec("bm1"), [0.0], 0.5, 1.0, 2, seed=0, store=False).to_csv(out)


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 1000))
def test_derive_seed_is_stable(master, index):
    s = rng.derive_seed(master, index)
    assert s == rng.derive_seed(master, index)
    assert 0 <= s < 2 ** 64
