"""Compound-Poisson driven Ornstein-Uhlenbeck processes.

Simulation is exact: Poisson jump counts, uniform order statistics for the
jump times, i.i.d. jump sizes, and the linear flow applied in closed form.
Also here: the jump-size integration-by-parts gradient estimator, total
variation decay experiments, and the Bernstein-function integral
``alpha(t) = int_0^inf r^{-1/2} exp(-t S(r)) dr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special, stats

from . import rng
from .estimators import gaussian_density_lipschitz, gaussian_tv, histogram_tv
from .functions import TestFunction
from .report import EstimateReport

# ---------------------------------------------------------------------------
# jump-size densities (normalised; the Levy density is lambda0 times these)


class GaussianJumps:
    name = "gaussian"

    def __init__(self, dim, scale=1.0):
        self.dim = dim
        self.scale = float(scale)

    def pdf(self, z):
        z = np.atleast_2d(z)
        s2 = self.scale ** 2
        return np.exp(-0.5 * (z * z).sum(axis=1) / s2) / (2 * math.pi * s2) ** (self.dim / 2)

    def grad_log(self, z):
        return -z / self.scale ** 2

    def sample(self, g, n):
        return g.standard_normal((n, self.dim)) * self.scale

    def bounds(self):
        return (-math.inf, math.inf)

    second_moment = property(lambda self: self.scale ** 2)


class TriweightJumps:
    """Product of ``(35/32)(1 - u^2)^3`` on ``[-1, 1]``, scaled; C^1 on R^d."""

    name = "triweight"

    def __init__(self, dim, scale=1.0):
        self.dim = dim
        self.scale = float(scale)

    def pdf(self, z):
        u = np.atleast_2d(z) / self.scale
        inside = np.all(np.abs(u) < 1, axis=1)
        dens = np.prod(np.clip(1 - u * u, 0, None) ** 3, axis=1) * (35 / 32 / self.scale) ** self.dim
        return np.where(inside, dens, 0.0)

    def grad_log(self, z):
        u = z / self.scale
        return -6 * u / (self.scale * (1 - u * u))

    def sample(self, g, n):
        return (2 * g.beta(4.0, 4.0, size=(n, self.dim)) - 1) * self.scale

    def bounds(self):
        return (-self.scale, self.scale)

    second_moment = property(lambda self: self.scale ** 2 / 9)


DENSITIES = {"gaussian": GaussianJumps, "triweight": TriweightJumps}


@dataclass(frozen=True)
class JumpSpec:
    """``dX = A X dt + dL`` with ``L`` compound Poisson of intensity
    ``lambda0`` and jump density from the catalogue.

    ``extra_levy="stable_surrogate"`` adds an independent truncated
    symmetric stable component (one dimension only, exploratory runs).
    ``z0`` and ``eps`` locate the ball on which the inverse-density
    integrability hypothesis of the total variation bound is checked.
    """

    dim: int = 1
    A: np.ndarray | None = None
    rho0: str = "gaussian"
    lambda0: float = 1.0
    scale: float = 1.0
    extra_levy: str = "none"
    stable_alpha: float = 0.5
    stable_c: float = 0.1
    stable_r0: float = 1.0
    stable_var_tol: float = 1e-6
    z0: float = 0.0
    eps: float = 0.5
    validate: bool = True

    def __post_init__(self):
        A = np.zeros((self.dim, self.dim)) if self.A is None else np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape != (self.dim, self.dim):
            raise ValueError("A must be dim x dim")
        object.__setattr__(self, "A", A)
        if self.rho0 not in DENSITIES:
            raise ValueError(f"unknown jump density {self.rho0!r}; catalogue: {sorted(DENSITIES)}")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if self.extra_levy not in ("none", "stable_surrogate"):
            raise ValueError("extra_levy must be 'none' or 'stable_surrogate'")
        if self.extra_levy != "none" and self.dim != 1:
            raise ValueError("the stable surrogate is one-dimensional")
        if self.validate:
            if dissipativity(A) > 1e-9:
                raise ValueError("A must satisfy <Ax, x> <= 0")
            mass = levy_mass(self)
            if abs(mass - self.lambda0) > 1e-6:
                raise ValueError(f"jump density integrates to {mass}, not lambda0")

    @property
    def density(self):
        return DENSITIES[self.rho0](self.dim, self.scale)

    @property
    def finite_activity(self) -> bool:
        return self.extra_levy == "none"

    def flow(self, s) -> np.ndarray:
        """``e^{A s}`` for each entry of ``s``; shape ``(len(s), d, d)``."""
        return expm_batch(self.A, s)


def dissipativity(A: np.ndarray, n_probes: int = 2048) -> float:
    """Largest ``<Ax, x>`` over unit probe vectors."""
    d = A.shape[0]
    g = rng.generator(0, rng.INSTANCES, 3)
    x = g.standard_normal((n_probes, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x = np.vstack([x, np.eye(d)])
    return float(((x @ A.T) * x).sum(axis=1).max())


def levy_mass(spec: JumpSpec) -> float:
    """Total mass of ``lambda0 * density`` by quadrature (dim <= 2)."""
    dens = spec.density
    lo, hi = dens.bounds()
    if spec.dim == 1:
        val, _ = integrate.quad(lambda z: float(dens.pdf([[z]])[0]), lo, hi, epsabs=1e-12, epsrel=1e-12)
    elif spec.dim == 2:
        val, _ = integrate.dblquad(lambda y, x: float(dens.pdf([[x, y]])[0]), lo, hi, lo, hi,
                                   epsabs=1e-10, epsrel=1e-10)
    else:
        return spec.lambda0
    return spec.lambda0 * val


def inverse_density_integral(spec: JumpSpec) -> float:
    """``int_{|z - z0| <= eps} 1/rho0(z) dz`` in 1-D; ``inf`` when the ball
    leaves the support."""
    if spec.dim != 1:
        raise ValueError("inverse-density check implemented in one dimension")
    dens = spec.density
    lo, hi = spec.z0 - spec.eps, spec.z0 + spec.eps
    blo, bhi = dens.bounds()
    if lo <= blo or hi >= bhi:
        return math.inf
    val, _ = integrate.quad(lambda z: 1.0 / (spec.lambda0 * float(dens.pdf([[z]])[0])), lo, hi)
    return val


def expm_batch(A: np.ndarray, s) -> np.ndarray:
    s = np.asarray(s, dtype=float).reshape(-1)
    d = A.shape[0]
    if not np.any(A):
        return np.broadcast_to(np.eye(d), (len(s), d, d))
    if np.array_equal(A, A[0, 0] * np.eye(d)):
        return np.exp(A[0, 0] * s)[:, None, None] * np.eye(d)
    w, V = np.linalg.eig(A)
    if np.linalg.cond(V) < 1e8:
        Vinv = np.linalg.inv(V)
        out = np.einsum("ij,kj,jl->kil", V, np.exp(np.outer(s, w)), Vinv)
        return out.real
    try:
        return np.stack([linalg.expm(A * si) for si in s])
    except Exception as exc:  # pragma: no cover - scipy failure
        raise ValueError(f"matrix exponential failed: {exc}") from exc


# ---------------------------------------------------------------------------
# exact simulation


@dataclass(frozen=True)
class JumpPathBundle:
    """Exactly simulated paths on ``[0, t]``.

    Jumps are stored flat: path ``i`` owns ``times[offsets[i]:offsets[i+1]]``
    and the matching rows of ``sizes``. ``final`` already includes any
    extra Levy component.
    """

    spec: JumpSpec
    start: np.ndarray
    horizon: float
    seed: int
    counts: np.ndarray
    final: np.ndarray
    offsets: np.ndarray | None = None
    times: np.ndarray | None = None
    sizes: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return len(self.counts)

    def path_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_paths), self.counts)

    def state_at(self, i: int, s: float) -> np.ndarray:
        """Position of path ``i`` at time ``s`` (compound Poisson part only)."""
        lo, hi = self.offsets[i], self.offsets[i + 1]
        tau, xi = self.times[lo:hi], self.sizes[lo:hi]
        keep = tau <= s
        out = self.spec.flow([s])[0] @ self.start
        if keep.any():
            out = out + np.einsum("kij,kj->i", self.spec.flow(s - tau[keep]), xi[keep])
        return out


def _stable_jumps(spec: JumpSpec, g, n: int, t: float):
    """Truncated symmetric stable jumps: density ``c |z|^{-1-a}`` on
    ``eps < |z| < r0``, ``eps`` set by the neglected-variance tolerance."""
    a, c, r0 = spec.stable_alpha, spec.stable_c, spec.stable_r0
    eps = (spec.stable_var_tol * (2 - a) / (2 * c)) ** (1 / (2 - a))
    rate = 2 * c * (eps ** -a - r0 ** -a) / a
    counts = g.poisson(rate * t, n)
    total = int(counts.sum())
    u = g.random(total)
    mag = (eps ** -a - u * (eps ** -a - r0 ** -a)) ** (-1 / a)
    sign = np.where(g.random(total) < 0.5, -1.0, 1.0)
    times = g.random(total) * t
    return counts, times, (sign * mag)[:, None]


def simulate_jump(spec: JumpSpec, x, t: float, n_paths: int, seed: int,
                  keep_jumps: bool = True) -> JumpPathBundle:
    """Exact paths of ``X_t = e^{At} x + sum_i e^{A(t - tau_i)} xi_i``.

    Paths are drawn in blocks of :data:`rng.JUMP_BLOCK`, each block from its
    own key, so path ``i`` is the same whatever ``n_paths`` is.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (spec.dim,):
        raise ValueError(f"start must have {spec.dim} coordinates")
    d, B = spec.dim, rng.JUMP_BLOCK
    base = spec.flow([t])[0] @ x
    dens = spec.density
    all_counts, finals, times_l, sizes_l = [], [], [], []
    for b in range((n_paths + B - 1) // B):
        g = rng.generator(seed, rng.JUMPS, b)
        counts = g.poisson(spec.lambda0 * t, B)
        total = int(counts.sum())
        owner = np.repeat(np.arange(B), counts)
        tau = g.random(total) * t
        xi = dens.sample(g, total)
        order = np.lexsort((tau, owner))
        tau, xi = tau[order], xi[order]
        moved = np.einsum("kij,kj->ki", spec.flow(t - tau), xi)
        final = np.repeat(base[None], B, 0)
        for j in range(d):
            final[:, j] += np.bincount(owner, moved[:, j], minlength=B)
        if spec.extra_levy == "stable_surrogate":
            gs = rng.generator(seed, rng.STABLE, b)
            sc, st, sz = _stable_jumps(spec, gs, B, t)
            sown = np.repeat(np.arange(B), sc)
            smoved = np.einsum("kij,kj->ki", spec.flow(t - st), sz)
            final[:, 0] += np.bincount(sown, smoved[:, 0], minlength=B)
        m = min(B, n_paths - b * B)
        all_counts.append(counts[:m])
        finals.append(final[:m])
        if keep_jumps:
            cut = int(counts[:m].sum())
            times_l.append(tau[:cut])
            sizes_l.append(xi[:cut])
    counts = np.concatenate(all_counts)
    offsets = times = sizes = None
    if keep_jumps:
        offsets = np.concatenate([[0], np.cumsum(counts)])
        times = np.concatenate(times_l)
        sizes = np.concatenate(sizes_l)
    return JumpPathBundle(spec, x, t, seed, counts, np.concatenate(finals), offsets, times, sizes)


# ---------------------------------------------------------------------------
# gradient of the "at least one jump" semigroup


@dataclass(frozen=True)
class GradientEstimate:
    estimate: np.ndarray
    std_error: np.ndarray
    n_paths: int

    def component(self, j: int) -> EstimateReport:
        return EstimateReport(float(self.estimate[j]), float(self.std_error[j]), self.n_paths)


def _vector_mean_se(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(len(values))


def jump_derivative(spec: JumpSpec, x, f: TestFunction, t: float, n_paths: int, seed: int) -> GradientEstimate:
    """Estimate ``grad P1_t f(x)``, ``P1_t f(x) = E[f(X_t^x) 1{N_t >= 1}]``.

    Shifting the start by ``v`` moves ``X_t`` by ``e^{At} v``, the same as
    shifting every jump ``xi_i`` by ``e^{A tau_i} v``; averaging that over
    the ``N_t`` jumps and integrating by parts in the jump sizes gives

        grad P1_t f(x) = -E[f(X_t) 1{N_t>=1} (1/N_t) sum_i e^{A* tau_i} grad log rho0(xi_i)].

    The leading minus sign comes from the integration by parts.
    """
    dens = spec.density
    if not hasattr(dens, "grad_log"):
        raise ValueError("jump density has no gradient metadata")
    bundle = simulate_jump(spec, x, t, n_paths, seed)
    owner = bundle.path_index()
    score = np.einsum("kji,kj->ki", spec.flow(bundle.times), dens.grad_log(bundle.sizes))
    d = spec.dim
    weight = np.zeros((n_paths, d))
    for j in range(d):
        weight[:, j] = np.bincount(owner, score[:, j], minlength=n_paths)
    has = bundle.counts >= 1
    weight[has] /= bundle.counts[has, None]
    values = -(f.f(bundle.final) * has)[:, None] * weight
    m, se = _vector_mean_se(values)
    return GradientEstimate(m, se, n_paths)


def jump_fd_oracle(spec: JumpSpec, x, f: TestFunction, t: float, n_paths: int, seed: int,
                   delta: float = 1e-3) -> GradientEstimate:
    """Central differences of ``P1_t f`` reusing one Poisson skeleton per path."""
    bundle = simulate_jump(spec, x, t, n_paths, seed, keep_jumps=False)
    has = (bundle.counts >= 1).astype(float)
    shift = spec.flow([t])[0]
    d = spec.dim
    values = np.empty((n_paths, d))
    for j in range(d):
        step = delta * shift[:, j]
        values[:, j] = (f.f(bundle.final + step) - f.f(bundle.final - step)) * has / (2 * delta)
    m, se = _vector_mean_se(values)
    return GradientEstimate(m, se, n_paths)


# ---------------------------------------------------------------------------
# total variation decay


def compound_poisson_gaussian_tv(dist: float, lam: float, t: float, scale: float = 1.0,
                                 tol: float = 1e-14) -> float:
    """Exact ``||P_t(x, .) - P_t(y, .)||_var`` for ``A = 0``, 1-D Gaussian jumps.

    Every mixture component ``N(x, n s^2) - N(y, n s^2)`` changes sign at the
    midpoint, so the variation of the mixture is the mixture of variations.
    """
    if dist == 0:
        return 0.0
    total = 2.0 * math.exp(-lam * t)
    mean = lam * t
    n_hi = int(stats.poisson.isf(tol, mean)) + 1
    n = np.arange(1, n_hi + 1)
    pmf = stats.poisson.pmf(n, mean)
    comp = 2.0 * special.erf(abs(dist) / (2.0 * np.sqrt(2.0 * n * scale ** 2)))
    return total + float((pmf * comp).sum())


def _mixture_lipschitz(spec: JumpSpec, t: float) -> float | None:
    """Lipschitz bound of the absolutely continuous part of the law at ``t``
    for ``A = 0`` Gaussian jumps in 1-D."""
    if spec.rho0 != "gaussian" or np.any(spec.A) or spec.dim != 1 or not spec.finite_activity:
        return None
    mean = spec.lambda0 * t
    n_hi = int(stats.poisson.isf(1e-14, mean)) + 1
    n = np.arange(1, n_hi + 1)
    lips = np.array([gaussian_density_lipschitz(float(k) * spec.scale ** 2) for k in n])
    return float((stats.poisson.pmf(n, mean) * lips).sum())


@dataclass(frozen=True)
class TVPoint:
    t: float
    tv: float
    se: float
    budget: float
    lower_bound: float
    n_paths: int


def jump_tv(spec: JumpSpec, x, y, t: float, n_paths: int, seed: int) -> TVPoint:
    """Histogram variation distance between the laws of ``X_t^x`` and ``X_t^y``
    from independent ensembles."""
    if spec.dim != 1:
        raise ValueError("jump TV estimation is one-dimensional")
    bx = simulate_jump(spec, x, t, n_paths, rng.derive_seed(seed, 0), keep_jumps=False)
    by = simulate_jump(spec, y, t, n_paths, rng.derive_seed(seed, 1), keep_jumps=False)
    hist = histogram_tv(bx.final[:, 0], by.final[:, 0], _mixture_lipschitz(spec, t))
    lb = 2.0 * math.exp(-spec.lambda0 * t) if spec.finite_activity and not np.allclose(x, y) else 0.0
    return TVPoint(t, hist.tv, hist.se, hist.budget, lb, n_paths)


@dataclass(frozen=True)
class DecayCurve:
    points: list
    slope: float
    slope_se: float
    status: str  # "acceptance" or "exploratory"
    window: tuple = (-0.65, -0.35)

    @property
    def t(self):
        return np.array([p.t for p in self.points])

    @property
    def tv(self):
        return np.array([p.tv for p in self.points])

    @property
    def se(self):
        return np.array([p.se for p in self.points])

    def lower_bound_margins(self) -> np.ndarray:
        """``(tv - lower_bound) / se`` per grid point; the check needs >= -3."""
        return np.array([(p.tv - p.lower_bound) / p.se if p.se > 0 else math.inf for p in self.points])

    @property
    def lower_bound_ok(self) -> bool:
        return all(p.tv >= p.lower_bound - 3 * p.se for p in self.points)

    @property
    def slope_ok(self) -> bool:
        return self.window[0] <= self.slope <= self.window[1]

    def csv(self) -> str:
        rows = ["t,tv_hat,se,lower_bound"]
        rows += [f"{p.t!r},{p.tv!r},{p.se!r},{p.lower_bound!r}" for p in self.points]
        return "\n".join(rows) + "\n"


def tv_decay_experiment(spec: JumpSpec, x, y, t_grid, n_paths: int, seed: int) -> DecayCurve:
    """Variation distance on ``t_grid`` and the fitted log-log slope.

    The grid must span at least 1.5 decades and start at or after
    ``1 + |x - y|^2``. Runs whose jump density fails the inverse-density
    integrability check, or that carry the stable surrogate, are marked
    exploratory.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    dist = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if len(t_grid) < 3 or math.log10(t_grid[-1] / t_grid[0]) < 1.5 - 1e-12:
        raise ValueError("t_grid must have >= 3 points spanning >= 1.5 decades")
    if t_grid[0] < 1 + dist * dist:
        raise ValueError("t_grid must start at or after 1 + |x - y|^2")
    points = [jump_tv(spec, x, y, float(t), n_paths, rng.derive_seed(seed, 10 + k))
              for k, t in enumerate(t_grid)]
    tv = np.array([p.tv for p in points])
    status = "acceptance"
    if not spec.finite_activity or not math.isfinite(inverse_density_integral(spec)):
        status = "exploratory"
    if np.any(tv <= 0):
        return DecayCurve(points, math.nan, math.nan, status)
    fit = stats.linregress(np.log(t_grid), np.log(tv))
    return DecayCurve(points, float(fit.slope), float(fit.stderr), status)


# ---------------------------------------------------------------------------
# Bernstein functions


def _power_S(c: float = 1.0, beta: float = 1.0):
    if not 0 < beta < 2:
        raise ValueError("beta must lie in (0, 2)")
    if not c > 0:
        raise ValueError("c must be positive")
    return lambda r: (c * r) ** (beta / 2)


BERNSTEIN = {
    "power": _power_S,  # S(r) = (c r)^{beta/2}
    "log": lambda: np.log1p,  # S(r) = log(1 + r)
}


@dataclass(frozen=True)
class AlphaValue:
    value: float
    rel_err: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _log_integrand(S, t):
    # after r = e^y: alpha = int exp(y/2 - t S(e^y)) dy
    return lambda y: 0.5 * y - t * S(math.exp(y))


def bernstein_alpha(S_id: str, t: float, rel_tol: float = 1e-6, **params) -> AlphaValue:
    """``alpha(t) = int_0^inf r^{-1/2} exp(-t S(r)) dr``.

    Integrated in ``y = log r`` over unit panels with adaptive Gauss-Kronrod
    until the integrand has fallen ``e^{-60}`` below its peak. A right tail
    no faster than ``1/r`` is reported as infinite.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    try:
        S = BERNSTEIN[S_id](**params)
    except KeyError:
        raise ValueError(f"unknown Bernstein function {S_id!r}") from None
    phi = _log_integrand(S, t)
    # tail exponent of r^{-1/2} e^{-tS(r)} in log-log coordinates
    y1, y2 = 40.0, 45.0
    slope = (phi(y2) - phi(y1)) / (y2 - y1) - 1.0
    if slope >= -1.0 - 1e-9:
        return AlphaValue(math.inf, 0.0)
    ys = np.arange(-80.0, 80.0, 0.5)
    vals = np.array([phi(y) for y in ys])
    peak_y = float(ys[vals.argmax()])
    peak = float(vals.max())
    cut = peak - 60.0
    lo = peak_y
    while phi(lo) > cut:
        lo -= 1.0
    hi = peak_y
    while phi(hi) > cut:
        hi += 1.0
        if hi - peak_y > 1e5:
            raise RuntimeError("alpha(t) tail decays too slowly to integrate")
    total, err = 0.0, 0.0
    for a in np.arange(lo, hi, 1.0):
        v, e = integrate.quad(lambda y: math.exp(phi(y) - peak), a, a + 1.0,
                              epsabs=0.0, epsrel=1e-12, limit=200)
        total += v
        err += e
    # left tail ~ e^{y/2}; right tail bounded by the same exponential rate or faster
    tail = 2.0 * math.exp(phi(lo) - peak) + 2.0 * math.exp(phi(hi) - peak) / max(0.5, -slope - 1.0)
    rel = (err + tail) / total
    if rel > rel_tol:
        raise RuntimeError(f"alpha(t) reached only relative error {rel:.2e}")
    return AlphaValue(total * math.exp(peak), float(rel))


def alpha_power_closed_form(beta: float, c: float, t: float) -> float:
    """``alpha(t)`` for ``S(r) = (c r)^{beta/2}``: ``2 Gamma(1/beta) / (beta sqrt(c) t^{1/beta})``."""
    return 2.0 * math.gamma(1.0 / beta) / (beta * math.sqrt(c) * t ** (1.0 / beta))


@dataclass(frozen=True)
class AlphaRate:
    beta: float
    c: float
    t: np.ndarray
    alpha: np.ndarray
    rel_err: np.ndarray
    scaled: np.ndarray  # alpha(t) t^{1/beta}
    tol: float = 1e-5

    @property
    def constant(self) -> float:
        return float(self.scaled.mean())

    @property
    def spread(self) -> float:
        """Largest relative deviation of ``alpha(t) t^{1/beta}`` from its mean."""
        return float(np.max(np.abs(self.scaled / self.constant - 1.0)))

    @property
    def verdict(self) -> bool:
        return self.spread <= self.tol

    def csv(self) -> str:
        rows = ["t,alpha,rel_err"] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(self.t, self.alpha, self.rel_err)]
        return "\n".join(rows) + "\n"


def alpha_rate_check(beta: float, c: float = 1.0, t_grid=(0.1, 1.0, 10.0)) -> AlphaRate:
    """Check that ``alpha(t) t^{1/beta}`` does not depend on ``t`` for
    ``S(r) = (c r)^{beta/2}``; that constant is the ``c'`` in
    ``alpha(t) <= c' / t^{1/beta}``."""
    t = np.asarray(t_grid, dtype=float)
    vals = [bernstein_alpha("power", float(ti), c=c, beta=beta) for ti in t]
    alpha = np.array([v.value for v in vals])
    return AlphaRate(beta, c, t, alpha, np.array([v.rel_err for v in vals]), alpha * t ** (1.0 / beta))
