"""Named checks grouped into suites.

Every check is a function of a :class:`Context` and a derived seed that
returns one :class:`CheckRow`. The registry order is the manifest order.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from . import couplings, estimators, jumps, measures, rng
from . import functions as fns
from .config import ExperimentConfig
from .report import CheckRow, EstimateReport, InequalityReport, _margin
from .sde import check_ellipticity, check_one_sided_K, get_spec


@dataclass
class Context:
    config: ExperimentConfig
    out: Path | None = None
    cache: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.config.paths

    def param(self, key):
        return self.config.get(key)

    def shared(self, name: str, factory):
        """Result of ``factory(seed)`` shared by every check asking for ``name``;
        the seed depends only on the master seed and ``name``."""
        if name not in self.cache:
            seed = rng.derive_seed(self.config.seed, zlib.crc32(name.encode()))
            self.cache[name] = (factory(seed), seed)
        return self.cache[name]

    def write(self, name: str, text: str) -> None:
        if self.out is not None:
            (self.out / name).write_text(text)


@dataclass(frozen=True)
class Check:
    check_id: str
    suite: str
    label: str
    description: str
    fn: Callable[[Context, int], CheckRow]


REGISTRY: list[Check] = []


def check(check_id: str, suite: str, label: str, description: str):
    def wrap(fn):
        REGISTRY.append(Check(check_id, suite, label, description, fn))
        return fn
    return wrap


def checks_for(suite: str) -> list[Check]:
    if suite == "full":
        return list(REGISTRY)
    return [c for c in REGISTRY if c.suite == suite]


def _row(check_id, lhs, rhs, margin, ok, n, seed, exploratory=False) -> CheckRow:
    verdict = "pass" if ok else "fail"
    if exploratory:
        verdict = "exploratory-" + verdict
    return CheckRow(check_id, float(lhs), float(rhs), float(margin), verdict, int(n), int(seed))


def _bound_row(check_id, value, limit, seed, n=0) -> CheckRow:
    """``value <= limit`` for exact (non-random) quantities."""
    return _row(check_id, value, limit, _margin(limit - value, 0.0), value <= limit, n, seed)


# ---------------------------------------------------------------------------
# transport


def random_transport_instance(g: np.random.Generator, k: int) -> measures.TransportInstance:
    """Two random measures with up to six atoms and Euclidean costs between
    random planar points; ``p`` alternates between 1 and 2."""
    n, m = (int(v) for v in g.integers(1, 7, 2))
    mu = measures.random_measure(g, range(n), sparsity=0.2)
    nu = measures.random_measure(g, range(m), sparsity=0.2)
    z = g.normal(size=(n + m, 2))
    cost = np.sqrt(((z[:n, None, :] - z[None, n:, :]) ** 2).sum(-1))
    return measures.TransportInstance(f"r{k}", mu, nu, measures.CostMatrix(cost), float(1 + k % 2))


@check("transport.duality", "transport", "(W)",
       "primal LP value^p equals the Kantorovich dual value on random instances")
def _transport_duality(ctx, seed):
    g = rng.generator(seed, rng.INSTANCES)
    rows = [measures.summarize(random_transport_instance(g, k)) for k in range(ctx.param("transport.n_instances"))]
    ctx.write("transport_summary.csv", "\n".join([measures.TRANSPORT_CSV_HEADER] + [r.csv_row() for r in rows]) + "\n")
    return _bound_row("transport.duality", max(r.gap for r in rows), 1e-8, seed)


@check("transport.tv_half", "transport", "(W) discrete cost",
       "W_1 for the discrete metric equals the Hahn-decomposition mass")
def _transport_tv(ctx, seed):
    g = rng.generator(seed, rng.INSTANCES)
    worst = 0.0
    for k in range(ctx.param("transport.n_instances")):
        n = int(g.integers(1, 7))
        mu = measures.random_measure(g, range(n), sparsity=0.2)
        nu = measures.random_measure(g, range(n), sparsity=0.2)
        w1, _ = measures.wasserstein_lp(mu, nu, measures.CostMatrix.discrete(n), 1.0)
        tv, plan = measures.wasserstein_coupling_tv(mu, nu)
        worst = max(worst, abs(w1 - measures.total_variation_half(mu, nu)), abs(tv - w1),
                    abs(plan.off_diagonal_mass() - w1))
    return _bound_row("transport.tv_half", worst, 1e-10, seed)


@check("transport.monotone_1d", "transport", "1-D optimal map",
       "quantile coupling cost equals the LP cost for |x-y|^2")
def _transport_1d(ctx, seed):
    g = rng.generator(seed, rng.INSTANCES)
    worst = 0.0
    for _ in range(ctx.param("transport.n_1d")):
        n, m = (int(v) for v in g.integers(1, 9, 2))
        mu = measures.random_measure(g, range(n), np.sort(g.normal(size=n) * 3))
        nu = measures.random_measure(g, range(m), np.sort(g.normal(size=m) * 3))
        _, w2 = measures.monotone_map_1d(mu, nu)
        lp, _ = measures.wasserstein_lp(mu, nu, measures.CostMatrix.from_coords(mu.coords, nu.coords), 2.0)
        worst = max(worst, abs(w2 * w2 - lp * lp))
    return _bound_row("transport.monotone_1d", worst, 1e-8, seed)


def random_monotone(g: np.random.Generator, coords: np.ndarray) -> np.ndarray:
    """Random bounded non-decreasing function on sorted ``coords``."""
    steps = g.exponential(size=len(coords)) * (g.random(len(coords)) < 0.7)
    vals = np.cumsum(steps) - g.exponential()
    out = np.empty_like(vals)
    out[np.argsort(coords)] = vals
    return out


@check("transport.fkg", "transport", "FKG",
       "mu(fg) + nu(fg) >= mu(f)nu(g) + nu(f)mu(g) for increasing f, g")
def _transport_fkg(ctx, seed):
    g = rng.generator(seed, rng.INSTANCES)
    violations = 0
    worst = math.inf
    for _ in range(ctx.param("transport.n_fkg")):
        n = int(g.integers(1, 9))
        coords = np.sort(g.normal(size=n))
        mu = measures.random_measure(g, range(n), coords)
        nu = measures.random_measure(g, range(n), coords)
        res = measures.fkg_check(mu, nu, random_monotone(g, coords), random_monotone(g, coords))
        violations += not res.holds
        worst = min(worst, res.lhs - res.rhs)
    return _row("transport.fkg", violations, 0, _margin(worst + 1e-12, 0.0), violations == 0, 0, seed)


# ---------------------------------------------------------------------------
# derivative formula for diffusions

BISMUT_BATTERY = [
    # id, spec, test function factory, start, direction, exact value
    ("bm_coord", "bm1", lambda: fns.coord(1), [0.0], [1.0], lambda t: 1.0),
    ("ou_coord", "ou1", lambda: fns.coord(1), [0.5], [1.0], lambda t: math.exp(-t)),
    ("bm_bump", "bm1", lambda: fns.bump(1, [0.5]), [0.0], [1.0], None),
    ("ou_bump", "ou1", lambda: fns.bump(1, [0.5]), [0.5], [1.0], None),
    ("ou2_step", "ou2", lambda: fns.smoothstep(2, [1.0, 0.5]), [0.2, -0.3], [0.0, 1.0], None),
    ("sin_ou_step", "sin_ou1", lambda: fns.smoothstep(1, [1.5]), [0.3], [1.0], None),
]


def _bismut_check(entry):
    name, spec_id, make_f, x, v, exact = entry

    def run(ctx, seed):
        spec, f = get_spec(spec_id), make_f()
        h, t, delta = ctx.param("bismut.h"), ctx.param("bismut.t"), ctx.param("bismut.delta")
        est = estimators.bismut_gradient(spec, x, v, f, t, h, ctx.n, rng.derive_seed(seed, 0))
        if exact is not None:
            return est.against(exact(t), k=4.0).row(f"bismut.{name}", seed)
        fd = estimators.finite_difference_oracle(spec, x, v, f, t, h, ctx.n, rng.derive_seed(seed, 1), delta)
        return est.against(fd.estimate, fd.std_error, k=3.0,
                           budget=estimators.fd_bias_budget(f, v, delta)).row(f"bismut.{name}", seed)

    label = "derivative formula, exact" if exact is not None else "derivative formula vs finite differences"
    check(f"bismut.{name}", "bismut", label, f"{spec_id}, {name}")(run)


for _entry in BISMUT_BATTERY:
    _bismut_check(_entry)


# ---------------------------------------------------------------------------
# Harnack inequalities


@check("harnack.k_condition", "harnack", "(K)", "sampled one-sided drift constant of OU is <= -1")
def _harnack_k(ctx, seed):
    res = check_one_sided_K(get_spec("ou2"), 4000, 5.0, seed, form="K")
    return _bound_row("harnack.k_condition", res.K_hat, get_spec("ou2").K_drift_claim + 1e-6, seed)


def _harnack_analytic(name, x, y):
    def run(ctx, seed):
        rep = estimators.harnack_verify(get_spec("ou1"), x, y, fns.explin(1), ctx.param("harnack.p"),
                                        ctx.param("harnack.t"), validate_K=False).analytic
        return rep.row(f"harnack.{name}", seed)
    check(f"harnack.{name}", "harnack", "(H)", f"OU, exp-linear f, closed form, x={x}, y={y}")(run)


_harnack_analytic("analytic", [0.0], [1.0])
_harnack_analytic("analytic_rev", [1.0], [0.0])


@check("harnack.mc_ou", "harnack", "(H)", "OU, bump f, both sides simulated")
def _harnack_mc(ctx, seed):
    rep = estimators.harnack_verify(get_spec("ou1"), [0.0], [1.0], fns.bump(1, [0.0], offset=0.1),
                                    ctx.param("harnack.p"), ctx.param("harnack.t"), ctx.param("harnack.h"),
                                    ctx.n, seed).mc
    return rep.row("harnack.mc_ou", seed)


@check("harnack.mc_sin_ou", "harnack", "(H)", "sin-perturbed OU in 2-D, bump f, both sides simulated")
def _harnack_mc_sin(ctx, seed):
    rep = estimators.harnack_verify(get_spec("sin_ou2"), [0.0, 0.0], [1.0, 0.0],
                                    fns.bump(2, [0.0, 0.0], offset=0.1), ctx.param("harnack.p"),
                                    ctx.param("harnack.t"), ctx.param("harnack.h"), max(ctx.n // 10, 1000),
                                    seed).mc
    return rep.row("harnack.mc_sin_ou", seed)


@check("harnack.gradient_bound", "harnack", "gradient estimate",
       "|grad P_t f|^2 <= e^{Kt} P_t |grad f|^2 for OU")
def _gradient_bound(ctx, seed):
    rep = estimators.gradient_bound_check(get_spec("ou1"), [0.3], fns.bump(1, [0.0]), ctx.param("harnack.t"),
                                          ctx.param("harnack.h"), ctx.n, seed)
    return rep.row("harnack.gradient_bound", seed)


# ---------------------------------------------------------------------------
# log-Harnack and the entropy bound


@check("log_harnack.aa_condition", "log_harnack", "(AA)",
       "sampled sigma-augmented one-sided constant and ellipticity of the modulated OU")
def _aa(ctx, seed):
    spec = get_spec("mod_ou1")
    res = check_one_sided_K(spec, 4000, 5.0, seed, form="AA")
    ok = res.passed and check_ellipticity(spec, 4000, 5.0, seed)
    return _row("log_harnack.aa_condition", res.K_hat, spec.K_claim, _margin(spec.K_claim - res.K_hat, 0.0),
                ok, 0, seed)


def _log_harnack_analytic(name, x, y):
    def run(ctx, seed):
        rep = estimators.log_harnack_verify(get_spec("ou1"), x, y, fns.explin(1), ctx.param("harnack.t")).analytic
        return rep.row(f"log_harnack.{name}", seed)
    check(f"log_harnack.{name}", "log_harnack", "log-Harnack", f"OU, exp-linear f, closed form, x={x}, y={y}")(run)


_log_harnack_analytic("analytic", [0.0], [1.0])
# nearly sharp: e^{-1} against (1 - e^{-2})/4 + 1/(e^2 - 1), a gap of 4.8e-3
_log_harnack_analytic("analytic_rev", [1.0], [0.0])


def _log_harnack_mc(name, spec_id):
    def run(ctx, seed):
        rep = estimators.log_harnack_verify(get_spec(spec_id), [0.0], [1.0], fns.bump(1, [0.0], offset=1.0),
                                            ctx.param("harnack.t"), ctx.param("harnack.h"), ctx.n, seed).mc
        return rep.row(f"log_harnack.{name}", seed)
    check(f"log_harnack.{name}", "log_harnack", "log-Harnack", f"{spec_id}, f = 1 + bump, simulated")(run)


_log_harnack_mc("mc_ou", "ou1")
_log_harnack_mc("mc_modulated", "mod_ou1")


def entropy_bound(K: float, lam: float, t: float, dist: float) -> float:
    """``K |x-y|^2 / (2 lam (1 - e^{-Kt}))``."""
    return K * dist * dist / (2 * lam * -math.expm1(-K * t))


def _entropy_check(name, spec_id):
    def run(ctx, seed):
        spec = get_spec(spec_id)
        t = ctx.param("harnack.t")
        run_ = couplings.couple_girsanov_tt(spec, [0.0], [1.0], ctx.param("harnack.h"), t, ctx.n, seed)
        ent, se = run_.entropy()
        bound = entropy_bound(spec.K_claim, spec.lambda_claim, t, 1.0)
        return InequalityReport(ent, bound, se, ctx.n).row(f"log_harnack.{name}", seed)
    check(f"log_harnack.{name}", "log_harnack", "(RR)", f"E[R log R] of the Girsanov coupling, {spec_id}")(run)


_entropy_check("entropy_ou", "ou1")
_entropy_check("entropy_modulated", "mod_ou1")


# ---------------------------------------------------------------------------
# couplings and total variation for diffusions


def _coupling_paths(ctx):
    return max(ctx.n // ctx.param("coupling.paths_divisor"), 200)


def _forced(ctx, spec_id):
    """Forced run shared by the checks on one spec; returns ``(run, seed)``."""
    return ctx.shared(f"forced_{spec_id}", lambda s: couplings.couple_forced(
        get_spec(spec_id), [0.0], [1.0], ctx.param("coupling.h"), ctx.param("coupling.t"),
        _coupling_paths(ctx), s))


def _forced_checks(spec_id):
    @check(f"coupling.forced_{spec_id}_fraction", "tv_diffusion", "eta construction",
           f"{spec_id}: at least 99% of forced pairs meet before t")
    def frac(ctx, seed):
        r, seed = _forced(ctx, spec_id)
        fail = 1.0 - r.coupled_fraction
        return _bound_row(f"coupling.forced_{spec_id}_fraction", fail, 0.01, seed, r.n_paths)

    @check(f"coupling.forced_{spec_id}_eta", "tv_diffusion", "eta construction",
           f"{spec_id}: int_0^t e^(-Ks) eta_s ds = |x-y| by quadrature")
    def eta(ctx, seed):
        sched = couplings.EtaSchedule(get_spec(spec_id).K_drift_claim, ctx.param("coupling.t"), 1.0)
        return _bound_row(f"coupling.forced_{spec_id}_eta", abs(sched.identity_residual()), 1e-8, seed)

    @check(f"coupling.forced_{spec_id}_weight", "tv_diffusion", "Girsanov weight",
           f"{spec_id}: mean Girsanov weight of the forced coupling is 1")
    def weight(ctx, seed):
        r, seed = _forced(ctx, spec_id)
        m, se = r.weight_mean()
        return EstimateReport(m, se, r.n_paths).against(1.0, k=4.0).row(f"coupling.forced_{spec_id}_weight", seed)

    @check(f"coupling.forced_{spec_id}_tv", "tv_diffusion", "(CC)",
           f"{spec_id}: histogram TV of the forced pair <= 2 P(T > t)")
    def tv(ctx, seed):
        r, seed = _forced(ctx, spec_id)
        b = estimators.tv_from_tail(r)
        ctx.write(f"tail_forced_{spec_id}.csv", couplings.coupling_time_tail(r, b.t).csv())
        return b.report.row(f"coupling.forced_{spec_id}_tv", seed)


_forced_checks("bm1")
_forced_checks("ou1")


def _sync_tv(spec_id):
    @check(f"coupling.sync_{spec_id}_tv", "tv_diffusion", "(CC)",
           f"{spec_id}: histogram TV of the synchronous pair <= 2 P(T > t)")
    def tv(ctx, seed):
        spec = get_spec(spec_id)
        r = couplings.couple_synchronous(spec, [0.0], [1.0], ctx.param("bismut.h"), ctx.param("coupling.t"),
                                         ctx.n, seed)
        var = spec.gaussian_law([0.0], ctx.param("coupling.t"))[1]
        return estimators.tv_from_tail(r, density_lipschitz=estimators.gaussian_density_lipschitz(var)
                                       ).report.row(f"coupling.sync_{spec_id}_tv", seed)


_sync_tv("bm1")
_sync_tv("ou1")


@check("coupling.sync_bm1_exact", "tv_diffusion", "(ii) exact TV",
       "never-coupling synchronous BM: histogram TV equals the exact Gaussian TV")
def _sync_exact(ctx, seed):
    t = ctx.param("coupling.t")
    r = couplings.couple_synchronous(get_spec("bm1"), [0.0], [1.0], ctx.param("bismut.h"), t, ctx.n, seed)
    hist = estimators.histogram_tv(r.x_final[:, 0], r.y_final[:, 0],
                                   estimators.gaussian_density_lipschitz(t), paired=True)
    return EstimateReport(hist.tv, hist.se, ctx.n).against(estimators.gaussian_tv(1.0, t), k=3.0,
                                                            budget=hist.budget).row("coupling.sync_bm1_exact", seed)


@check("coupling.girsanov_ou_tv", "tv_diffusion", "(CC)",
       "Girsanov pair for OU: histogram TV <= 2 P(T > t)")
def _girsanov_tv(ctx, seed):
    r = couplings.couple_girsanov_tt(get_spec("ou1"), [0.0], [1.0], ctx.param("harnack.h"),
                                     ctx.param("coupling.t"), ctx.n, seed)
    return estimators.tv_from_tail(r).report.row("coupling.girsanov_ou_tv", seed)


# ---------------------------------------------------------------------------
# jumps: exact simulation and total variation decay


def _gauss_jumps(**kw):
    return jumps.JumpSpec(dim=1, rho0="gaussian", lambda0=1.0, **kw)


@check("tv_jump.poisson_counts", "tv_jump", "compound Poisson",
       "jump counts: mean and variance equal lambda0 t within 4 SE")
def _poisson(ctx, seed):
    t = 2.0
    b = jumps.simulate_jump(_gauss_jumps(), [0.0], t, ctx.n, seed, keep_jumps=False)
    c = b.counts.astype(float)
    n = len(c)
    mean_z = abs(c.mean() - t) / math.sqrt(t / n)
    # Var of the sample variance for Poisson(m): m/n + 2 m^2/(n-1)
    var_z = abs(c.var(ddof=1) - t) / math.sqrt(t / n + 2 * t * t / (n - 1))
    z = max(mean_z, var_z)
    return _row("tv_jump.poisson_counts", z, 4.0, 4.0 - z, z <= 4.0, n, seed)


@check("tv_jump.size_law", "tv_jump", "compound Poisson",
       "jump sizes follow the normalised Levy density (Kolmogorov-Smirnov)")
def _sizes(ctx, seed):
    b = jumps.simulate_jump(_gauss_jumps(), [0.0], 1.0, min(ctx.n, 20000), seed)
    p = stats.kstest(b.sizes[:, 0], "norm").pvalue
    return _row("tv_jump.size_law", p, 1e-3, math.nan, p >= 1e-3, b.n_paths, seed)


def _decay(ctx, seed, spec):
    return jumps.tv_decay_experiment(spec, [0.0], [1.0], ctx.param("tv_jump.t_grid"), ctx.n, seed)


@check("tv_jump.decay_slope", "tv_jump", "t^(-1/2) rate",
       "compound Poisson, Gaussian jumps: log-log slope of TV over t in [2, 64] lies in [-0.65, -0.35]")
def _slope(ctx, seed):
    spec = _gauss_jumps(z0=ctx.param("tv_jump.z0"), eps=ctx.param("tv_jump.eps"))
    c = _decay(ctx, seed, spec)
    ctx.write("tv_jump_decay.csv", c.csv())
    half = 0.5 * (c.window[1] - c.window[0])
    return _row("tv_jump.decay_slope", c.slope, -0.5, _margin(half - abs(c.slope + 0.5), c.slope_se),
                c.slope_ok, ctx.n, seed, exploratory=c.status == "exploratory")


@check("tv_jump.lower_bound", "tv_jump", "no-jump lower bound",
       "TV >= 2 exp(-lambda0 t) - 3 SE on the decay grid and at small t")
def _lower(ctx, seed):
    grid = sorted(set(ctx.param("tv_jump.t_grid")) | {0.25, 0.5, 1.0})
    spec = _gauss_jumps()
    pts = [jumps.jump_tv(spec, [0.0], [1.0], t, ctx.n, rng.derive_seed(seed, k)) for k, t in enumerate(grid)]
    worst = min(pts, key=lambda p: (p.tv - p.lower_bound) / p.se)
    return InequalityReport(worst.lower_bound, worst.tv, worst.se, ctx.n).row("tv_jump.lower_bound", seed)


@check("tv_jump.exact_series", "tv_jump", "t^(-1/2) rate",
       "histogram TV at t = 8 against the exact compound Poisson series")
def _series(ctx, seed):
    p = jumps.jump_tv(_gauss_jumps(), [0.0], [1.0], 8.0, ctx.n, seed)
    exact = jumps.compound_poisson_gaussian_tv(1.0, 1.0, 8.0)
    return EstimateReport(p.tv, p.se, ctx.n).against(exact, k=3.0, budget=p.budget).row("tv_jump.exact_series", seed)


@check("tv_jump.same_start", "tv_jump", "t^(-1/2) rate", "x = y: histogram TV is zero within its budget")
def _same(ctx, seed):
    p = jumps.jump_tv(_gauss_jumps(), [0.0], [0.0], 4.0, ctx.n, seed)
    return EstimateReport(p.tv, p.se, ctx.n).against(0.0, k=3.0, budget=p.budget).row("tv_jump.same_start", seed)


@check("tv_jump.ou_decay", "tv_jump", "t^(-1/2) rate",
       "O-U with A = -0.1 and triweight jumps: TV decreases along the grid (exploratory)")
def _ou_decay(ctx, seed):
    spec = jumps.JumpSpec(dim=1, A=[[-0.1]], rho0="triweight", z0=ctx.param("tv_jump.z0"),
                          eps=ctx.param("tv_jump.eps"))
    c = _decay(ctx, seed, spec)
    ok = bool(np.all(np.diff(c.tv) <= 3 * np.hypot(c.se[1:], c.se[:-1])))
    return _row("tv_jump.ou_decay", c.slope, 0.0, math.nan, ok, ctx.n, seed, exploratory=True)


@check("tv_jump.stable_surrogate", "tv_jump", "t^(-1/2) rate",
       "Gaussian compound Poisson plus truncated stable part: decay slope (exploratory)")
def _stable(ctx, seed):
    spec = _gauss_jumps(extra_levy="stable_surrogate")
    grid = (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    n = min(ctx.n, 20000)
    c = jumps.tv_decay_experiment(spec, [0.0], [1.0], grid, n, seed)
    return _row("tv_jump.stable_surrogate", c.slope, -0.5, math.nan, c.slope < 0, n, seed, exploratory=True)


# ---------------------------------------------------------------------------
# jump derivative formula

JUMP_FUNCTIONS = {
    "bump": lambda: fns.bump(1, [0.5]),
    "step": lambda: fns.smoothstep(1, [1.5]),
}


def _jump_deriv_check(rho0, fname, a):
    cid = f"jump_derivative.{rho0}_{fname}_{'ou' if a else 'free'}"

    def run(ctx, seed):
        spec = jumps.JumpSpec(dim=1, A=[[-a]], rho0=rho0)
        f = JUMP_FUNCTIONS[fname]()
        t, delta = ctx.param("jump.t"), ctx.param("jump.delta")
        est = jumps.jump_derivative(spec, [0.3], f, t, ctx.n, rng.derive_seed(seed, 0)).component(0)
        fd = jumps.jump_fd_oracle(spec, [0.3], f, t, ctx.n, rng.derive_seed(seed, 1), delta).component(0)
        budget = estimators.fd_bias_budget(f, [math.exp(-a * t)], delta)
        return est.against(fd.estimate, fd.std_error, k=3.0, budget=budget).row(cid, seed)

    check(cid, "jump_derivative", "jump derivative formula", f"{rho0} jumps, {fname}, A = {'-I' if a else '0'}")(run)


for _rho in ("gaussian", "triweight"):
    for _f in JUMP_FUNCTIONS:
        for _a in (0.0, 1.0):
            _jump_deriv_check(_rho, _f, _a)


@check("jump_derivative.constant", "jump_derivative", "jump derivative formula",
       "constant f: the estimate is zero within 4 SE")
def _jump_const(ctx, seed):
    est = jumps.jump_derivative(_gauss_jumps(), [0.3], fns.constant(1, 2.0), ctx.param("jump.t"), ctx.n,
                                seed).component(0)
    return est.against(0.0, k=4.0).row("jump_derivative.constant", seed)


@check("jump_derivative.translation", "jump_derivative", "jump derivative formula",
       "A = 0: shifting start and f together leaves the estimate unchanged")
def _jump_shift(ctx, seed):
    t = ctx.param("jump.t")
    a = jumps.jump_derivative(_gauss_jumps(), [0.3], fns.bump(1, [0.5]), t, ctx.n, seed).component(0)
    b = jumps.jump_derivative(_gauss_jumps(), [1.3], fns.bump(1, [1.5]), t, ctx.n, seed).component(0)
    diff = abs(a.estimate - b.estimate)
    return _bound_row("jump_derivative.translation", diff, 1e-9, seed, ctx.n)


# ---------------------------------------------------------------------------
# Bernstein functions


def _alpha_rate(beta):
    cid = f"alpha_rate.beta_{beta}"

    def run(ctx, seed):
        rep = jumps.alpha_rate_check(beta, 1.0, ctx.param("alpha.t_grid"))
        ctx.write(f"alpha_beta_{beta}.csv", rep.csv())
        return _bound_row(cid, rep.spread, rep.tol, seed)

    check(cid, "alpha_rate", "alpha(t) <= c'/t^(1/beta)",
          f"S(r) = r^(beta/2), beta = {beta}: alpha(t) t^(1/beta) constant within 1e-5")(run)


for _beta in (0.5, 1.0, 1.5):
    _alpha_rate(_beta)


@check("alpha_rate.beta_1_constant", "alpha_rate", "alpha(t) <= c'/t^(1/beta)",
       "S(r) = sqrt(r): alpha(t) t = 2")
def _alpha_two(ctx, seed):
    rep = jumps.alpha_rate_check(1.0, 1.0, ctx.param("alpha.t_grid"))
    return _bound_row("alpha_rate.beta_1_constant", abs(rep.constant - 2.0), 1e-6, seed)


@check("alpha_rate.log_divergence", "alpha_rate", "alpha(t) < infinity",
       "S(r) = log(1+r): alpha is infinite for t <= 1/2 and equals B(1/2, t-1/2) above")
def _alpha_log(ctx, seed):
    worst = 0.0
    ok = all(not jumps.bernstein_alpha("log", t).finite for t in (0.25, 0.5))
    for t in (0.75, 1.0, 3.0):
        a = jumps.bernstein_alpha("log", t).value
        exact = math.exp(math.lgamma(0.5) + math.lgamma(t - 0.5) - math.lgamma(t))
        worst = max(worst, abs(a / exact - 1))
    return _row("alpha_rate.log_divergence", worst, 1e-6, _margin(1e-6 - worst, 0.0), ok and worst <= 1e-6, 0, seed)


def listing() -> str:
    lines = []
    for suite in sorted({c.suite for c in REGISTRY}, key=[c.suite for c in REGISTRY].index):
        lines.append(f"{suite}:")
        lines += [f"  {c.check_id}  [{c.label}]  {c.description}" for c in REGISTRY if c.suite == suite]
    lines.append("full: every check above, in this order")
    return "\n".join(lines) + "\n"
