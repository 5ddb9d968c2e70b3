"""Monte Carlo and closed-form checks of the diffusion-semigroup statements.

The derivative formula estimator, a common-random-number finite-difference
oracle, the dimension-free and log Harnack inequalities, the L2 gradient
bound, and total-variation bounds from coupling-time tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .couplings import CouplingRun, K_ZERO, coupling_time_tail
from .functions import TestFunction, power
from .report import EstimateReport, InequalityReport
from .sde import DiffusionSpec, brownian_step, check_flagged, check_one_sided_K, n_steps


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = values[np.isfinite(values)]
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def terminal_states(spec: DiffusionSpec, starts, h: float, t: float, n_paths: int, seed: int) -> list[np.ndarray]:
    """Terminal states from several starts driven by the same noise."""
    steps = n_steps(h, t)
    d = spec.dim
    starts = [np.asarray(s, dtype=float).reshape(-1) for s in starts]
    k = len(starts)
    X = np.concatenate([np.repeat(s[None], n_paths, 0) for s in starts])
    Z, sig = spec.Z, spec.sigma
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(steps):
            dB = brownian_step(seed, j, n_paths, d, h)
            if k > 1:
                dB = np.tile(dB, (k, 1))
            X = X + Z(X) * h + sig.apply(X, dB)
    check_flagged(X)
    return [X[i * n_paths:(i + 1) * n_paths] for i in range(k)]


def mc_expectation(spec, x, f: TestFunction, t, h, n_paths, seed) -> EstimateReport:
    (X,) = terminal_states(spec, [x], h, t, n_paths, seed)
    m, se = _mean_se(f.f(X))
    return EstimateReport(m, se, n_paths)


# ---------------------------------------------------------------------------
# derivative formula


def bismut_gradient(spec: DiffusionSpec, x, v, f: TestFunction, t: float, h: float,
                    n_paths: int, seed: int) -> EstimateReport:
    """Estimate ``grad_v P_t f(x)`` without differentiating ``f``.

    Uses ``(1/t) E[f(X_t) int_0^t <(t-s) grad_v Z(X_s) + v, dB_s>]`` with the
    stochastic integral taken at left points of the Euler grid.
    """
    if not spec.unit_noise:
        raise ValueError("the derivative formula here needs unit noise")
    if not getattr(spec.Z, "differentiable", False):
        raise ValueError(f"drift {spec.drift!r} has no registered derivative")
    steps = n_steps(h, t)
    d = spec.dim
    v = np.asarray(v, dtype=float).reshape(-1)
    X = np.repeat(np.asarray(x, dtype=float).reshape(1, -1), n_paths, 0)
    integral = np.zeros(n_paths)
    Z = spec.Z
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            dB = brownian_step(seed, k, n_paths, d, h)
            weight = (t - k * h) * Z.directional(X, v) + v
            integral += (weight * dB).sum(axis=1)
            X = X + Z(X) * h + dB
    check_flagged(X)
    m, se = _mean_se(f.f(X) * integral / t)
    return EstimateReport(m, se, n_paths)


def finite_difference_oracle(spec: DiffusionSpec, x, v, f: TestFunction, t: float, h: float,
                             n_paths: int, seed: int, delta: float) -> EstimateReport:
    """Central difference of ``P_t f`` at ``x +- delta v`` with common noise."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    Xp, Xm = terminal_states(spec, [x + delta * v, x - delta * v], h, t, n_paths, seed)
    m, se = _mean_se((f.f(Xp) - f.f(Xm)) / (2 * delta))
    return EstimateReport(m, se, n_paths)


def fd_bias_budget(f: TestFunction, v, delta: float) -> float:
    """Bound on the central-difference bias, ``|v|^3 delta^2 sup|f'''| / 6``.

    Valid for contractive or neutral drifts, where the semigroup does not
    enlarge third derivatives.
    """
    nv = float(np.linalg.norm(v))
    return nv ** 3 * delta ** 2 * f.d3_bound / 6.0


# ---------------------------------------------------------------------------
# Harnack-type inequalities


def _k_ratio(K: float, t: float) -> float:
    """``K / (1 - e^{-Kt})`` with the limit ``1/t`` at ``K = 0``."""
    if abs(K) < K_ZERO:
        return 1.0 / t
    return K / -math.expm1(-K * t)


def harnack_exponent(p: float, K: float, t: float, dist: float) -> float:
    """``p K |x-y|^2 / (2 (p-1) (1 - e^{-Kt}))``."""
    if not p > 1:
        raise ValueError("Harnack exponent needs p > 1")
    return p * dist * dist * _k_ratio(K, t) / (2.0 * (p - 1.0))


def log_harnack_constant(K: float, lam: float, t: float, dist: float) -> float:
    """``K |x-y|^2 / (2 lambda (1 - e^{-Kt}))``."""
    return dist * dist * _k_ratio(K, t) / (2.0 * lam)


@dataclass(frozen=True)
class HarnackReport:
    mc: InequalityReport | None
    analytic: InequalityReport | None

    @property
    def verdict(self) -> bool:
        return all(r.verdict for r in (self.mc, self.analytic) if r is not None)


def _dist(x, y):
    return float(np.linalg.norm(np.asarray(x, float).reshape(-1) - np.asarray(y, float).reshape(-1)))


def _gaussian_mean(spec, f, x, t):
    law = spec.gaussian_law(x, t)
    if law is None or f.gaussian_mean is None:
        return None
    return f.gaussian_mean(*law)


def harnack_verify(spec: DiffusionSpec, x, y, f: TestFunction, p: float, t: float,
                   h: float = 1e-3, n_paths: int = 0, seed: int = 0,
                   validate_K: bool = True) -> HarnackReport:
    """Check ``(P_t f(x))^p <= P_t f^p(y) exp(harnack_exponent)``.

    Uses the drift-only constant ``spec.K_drift_claim``. With ``n_paths > 0``
    both sides are estimated by simulation; when the law is Gaussian and
    ``f`` has an explicit Gaussian mean, both sides are also evaluated in
    closed form.
    """
    if not p > 1:
        raise ValueError("p must be > 1")
    if f.infimum < 0:
        raise ValueError("f must be non-negative")
    K = spec.K_drift_claim
    if validate_K and not check_one_sided_K(spec, 2000, 5.0, seed, form="K").passed:
        raise ValueError("drift does not satisfy the claimed one-sided constant")
    c = math.exp(harnack_exponent(p, K, t, _dist(x, y)))
    fp = power(f, p)
    analytic = None
    px, pfy = _gaussian_mean(spec, f, x, t), _gaussian_mean(spec, fp, y, t)
    if px is not None and pfy is not None:
        analytic = InequalityReport(px ** p, pfy * c)
    mc = None
    if n_paths > 0:
        lhs = mc_expectation(spec, x, f, t, h, n_paths, seed)
        rhs = mc_expectation(spec, y, fp, t, h, n_paths, rng.derive_seed(seed, 1))
        lhs_val = lhs.estimate ** p
        lhs_se = p * abs(lhs.estimate) ** (p - 1) * lhs.std_error
        mc = InequalityReport(lhs_val, rhs.estimate * c, math.hypot(lhs_se, rhs.std_error * c), n_paths)
    return HarnackReport(mc, analytic)


def log_harnack_verify(spec: DiffusionSpec, x, y, f: TestFunction, t: float, h: float = 1e-3,
                       n_paths: int = 0, seed: int = 0, K: float | None = None,
                       lam: float | None = None) -> HarnackReport:
    """Check ``P_t log f(x) <= log P_t f(y) + log_harnack_constant``.

    Defaults to the sigma-augmented constant ``spec.K_claim`` and
    ``spec.lambda_claim``. The simulated check needs ``f >= 1``; the closed
    form only needs ``f > 0`` since both sides shift by ``log c`` when ``f``
    is scaled by ``c``.
    """
    K = spec.K_claim if K is None else K
    lam = spec.lambda_claim if lam is None else lam
    const = log_harnack_constant(K, lam, t, _dist(x, y))
    analytic = None
    law_x = spec.gaussian_law(x, t)
    if law_x is not None and f.powered is not None and f.gaussian_mean is not None:
        # log f is affine for the exp-linear and constant entries
        log_f = lambda z: float(np.log(f.f(np.atleast_2d(z)))[0])
        lhs = log_f(law_x[0])
        analytic = InequalityReport(lhs, math.log(_gaussian_mean(spec, f, y, t)) + const)
    mc = None
    if n_paths > 0:
        probe = np.linspace(-8, 8, 401)[:, None] * np.ones(spec.dim)
        if f.infimum < 1 or np.any(f.f(probe) < 1):
            raise ValueError("log-Harnack check needs f >= 1")
        (X,) = terminal_states(spec, [x], h, t, n_paths, seed)
        (Y,) = terminal_states(spec, [y], h, t, n_paths, rng.derive_seed(seed, 1))
        lm, lse = _mean_se(np.log(f.f(X)))
        pm, pse = _mean_se(f.f(Y))
        mc = InequalityReport(lm, math.log(pm) + const, math.hypot(lse, pse / pm), n_paths)
    return HarnackReport(mc, analytic)


def gradient_bound_check(spec: DiffusionSpec, x, f: TestFunction, t: float, h: float,
                         n_paths: int, seed: int, delta: float = 0.05) -> InequalityReport:
    """Check ``|grad P_t f(x)|^2 <= e^{Kt} P_t |grad f|^2 (x)`` with ``K = spec.K_claim``.

    The gradient is a central difference along every axis, all starts sharing
    one noise realisation.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = spec.dim
    starts = [x]
    for j in range(d):
        e = np.eye(d)[j]
        starts += [x + delta * e, x - delta * e]
    finals = terminal_states(spec, starts, h, t, n_paths, seed)
    grad, grad_se = np.zeros(d), np.zeros(d)
    for j in range(d):
        grad[j], grad_se[j] = _mean_se((f.f(finals[1 + 2 * j]) - f.f(finals[2 + 2 * j])) / (2 * delta))
    lhs = float(grad @ grad)
    lhs_se = float(np.sqrt(((2 * grad * grad_se) ** 2).sum()))
    bias = d * delta ** 2 * f.d3_bound / 6.0
    budget = 2 * math.sqrt(lhs) * bias * math.sqrt(d) + d * bias * bias if math.isfinite(bias) else 0.0
    g2, g2_se = _mean_se(f.grad_sq(finals[0]))
    scale = math.exp(spec.K_claim * t)
    return InequalityReport(lhs, scale * g2, math.hypot(lhs_se, scale * g2_se), n_paths,
                            budget=budget)


# ---------------------------------------------------------------------------
# total variation


@dataclass(frozen=True)
class HistogramTV:
    """Histogram estimate of ``||mu - nu||_var = sum_b |mu(b) - nu(b)|``.

    ``budget`` bounds the two histogram biases: the upward finite-sample
    inflation (expected absolute noise per bin) and the downward binning
    loss (density Lipschitz bound times bin width).
    """

    tv: float
    se: float
    noise_bias: float
    binning_error: float
    width: float
    n_bins: int

    @property
    def budget(self) -> float:
        return self.noise_bias + self.binning_error


def _fd_width(pooled: np.ndarray) -> float:
    n = len(pooled)
    q75, q25 = np.percentile(pooled, [75, 25])
    w = 2.0 * (q75 - q25) * n ** (-1.0 / 3.0)
    if w <= 0:
        # atoms can make the IQR vanish; fall back to Scott's rule
        w = 3.49 * pooled.std() * n ** (-1.0 / 3.0)
    return float(w)


def gaussian_density_lipschitz(var: float, dim: int = 1) -> float:
    """Sup of ``|grad|`` of an isotropic Gaussian density with variance ``var``."""
    return (2 * math.pi * var) ** (-dim / 2) * math.exp(-0.5) / math.sqrt(var)


def histogram_tv(a: np.ndarray, b: np.ndarray, density_lipschitz: float | None = None,
                 paired: bool = False) -> HistogramTV:
    """Total variation (var norm, in ``[0, 2]``) between two samples in 1-D or 2-D.

    Bin width follows the Freedman-Diaconis rule on the pooled sample, per
    axis. ``paired`` means row ``i`` of ``a`` and ``b`` come from one
    coupled path, which changes the variance of the estimate. Without an
    explicit ``density_lipschitz`` a Gaussian bound from the larger sample
    variance is used.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    d = a.shape[1]
    if d > 2:
        raise ValueError("histogram TV is limited to one or two dimensions")
    pooled = np.concatenate([a, b])
    widths = [_fd_width(pooled[:, j]) for j in range(d)]
    if any(w <= 0 for w in widths):
        return HistogramTV(0.0, 0.0, 0.0, 0.0, 0.0, 1)
    edges = [np.arange(pooled[:, j].min(), pooled[:, j].max() + widths[j], widths[j])
             for j in range(d)]
    edges = [e if len(e) > 1 else np.array([e[0], e[0] + widths[j]]) for j, e in enumerate(edges)]

    def index(z):
        idx = [np.clip(np.searchsorted(edges[j], z[:, j], side="right") - 1, 0, len(edges[j]) - 2)
               for j in range(d)]
        return np.ravel_multi_index(idx, [len(e) - 1 for e in edges])

    n_bins = int(np.prod([len(e) - 1 for e in edges]))
    ia, ib = index(a), index(b)
    pa = np.bincount(ia, minlength=n_bins) / len(a)
    pb = np.bincount(ib, minlength=n_bins) / len(b)
    diff = pa - pb
    tv = float(np.abs(diff).sum())
    sign = np.sign(diff)
    if paired:
        se = float((sign[ia] - sign[ib]).std(ddof=1) / math.sqrt(len(a)))
    else:
        se = math.sqrt(sign[ia].var(ddof=1) / len(a) + sign[ib].var(ddof=1) / len(b))
    noise = float(np.sqrt(2 / math.pi) * np.sqrt(pa * (1 - pa) / len(a) + pb * (1 - pb) / len(b)).sum())
    if density_lipschitz is None:
        var = max(float(a.var(axis=0).max()), float(b.var(axis=0).max()))
        density_lipschitz = gaussian_density_lipschitz(var, d) if var > 0 else 0.0
    w = max(widths)
    binning = density_lipschitz * w * max(1.0, 4.0 * w)
    return HistogramTV(tv, se, noise, binning, w, n_bins)


def gaussian_tv(dist: float, var: float) -> float:
    """``||N(0, var) - N(dist, var)||_var`` in 1-D."""
    return 2.0 * math.erf(abs(dist) / (2.0 * math.sqrt(2.0 * var)))


@dataclass(frozen=True)
class TVBound:
    t: np.ndarray
    bound: np.ndarray
    bound_se: np.ndarray
    hist: HistogramTV

    @property
    def report(self) -> InequalityReport:
        """Histogram TV at the horizon against twice the tail there."""
        se = math.hypot(self.hist.se, self.bound_se[-1])
        return InequalityReport(self.hist.tv, float(self.bound[-1]), se, int(self.n_paths),
                                budget=self.hist.budget)

    n_paths: int = 0

    def csv(self) -> str:
        rows = ["t,bound,se"] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(self.t, self.bound, self.bound_se)]
        return "\n".join(rows) + "\n"


def tv_from_tail(run: CouplingRun, t_grid=None, pi_mass: float = 1.0,
                 density_lipschitz: float | None = None) -> TVBound:
    """Upper bound ``t -> 2 pi_mass P(T > t)`` on the variation distance
    between the two marginals of a coupled run, with the histogram distance
    at the horizon for comparison."""
    if t_grid is None:
        t_grid = np.linspace(0.0, run.horizon, 11)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[-1] != run.horizon:
        t_grid = np.append(t_grid, run.horizon)
    tail = coupling_time_tail(run, t_grid)
    ok = ~run.flagged
    hist = histogram_tv(run.x_final[ok], run.y_final[ok], density_lipschitz, paired=True)
    return TVBound(t_grid, 2 * pi_mass * tail.tail, 2 * pi_mass * tail.se, hist, tail.n_paths)
