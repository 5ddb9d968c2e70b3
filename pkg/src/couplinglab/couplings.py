"""Coupled pairs of diffusion paths.

Three constructions share one loop shape: both components see the same
Brownian increments, the pair is glued once it enters the coupling band,
and a Girsanov log-weight is accumulated (identically zero for the
synchronous coupling).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .sde import DiffusionSpec, brownian_step, check_flagged, n_steps

K_ZERO = 1e-8
FORCED_FAIL_LIMIT = 0.05
GLUE_FLAG_LIMIT = 0.01


def glue_band(spec: DiffusionSpec, h: float) -> float:
    """Distance below which a discretised pair is declared coupled."""
    return max(10.0 * h * (1.0 + spec.Z.scale), 1e-6)


@dataclass(frozen=True)
class EtaSchedule:
    """Forcing intensity that closes a gap of ``xy_dist`` by time ``t_horizon``.

    ``eta(s) = |x-y| e^{-Ks} / int_0^t e^{-2Kr} dr``, so that
    ``int_0^t e^{-Ks} eta(s) ds = |x-y|``.
    """

    K: float
    t_horizon: float
    xy_dist: float

    @property
    def normaliser(self) -> float:
        K, t = self.K, self.t_horizon
        if abs(K) < K_ZERO:
            return t
        return -math.expm1(-2 * K * t) / (2 * K)

    def __call__(self, s):
        return self.xy_dist * np.exp(-self.K * np.asarray(s, dtype=float)) / self.normaliser

    def on_grid(self, h: float) -> np.ndarray:
        """Left-point values on the step grid."""
        return self(np.arange(n_steps(h, self.t_horizon)) * h)

    def identity_residual(self) -> float:
        """``int_0^t e^{-Ks} eta(s) ds - |x-y|`` by adaptive quadrature."""
        val, _ = integrate.quad(lambda s: math.exp(-self.K * s) * float(self(s)), 0.0,
                                self.t_horizon, epsabs=1e-13, epsrel=1e-13)
        return val - self.xy_dist

    def l2_mass(self) -> float:
        """``int_0^t eta(s)^2 ds``, the variance of ``log R`` when the
        direction of the forcing is deterministic."""
        return self.xy_dist ** 2 / self.normaliser


def xi(K: float, t: float, s):
    """``(1 - e^{K(s-t)}) / K``, with limit ``t - s`` at ``K = 0``."""
    s = np.asarray(s, dtype=float)
    if abs(K) < K_ZERO:
        return t - s
    return -np.expm1(K * (s - t)) / K


@dataclass(frozen=True)
class CouplingRun:
    """Terminal states, coupling steps and log Girsanov weights of a coupled run.

    ``coupling_step`` is -1 for paths that never entered the band.
    """

    kind: str
    x_final: np.ndarray
    y_final: np.ndarray
    coupling_step: np.ndarray
    log_weights: np.ndarray
    step: float
    horizon: float
    seed: int
    band: float
    flagged: np.ndarray
    eta_schedule: np.ndarray | None = None
    x_paths: np.ndarray | None = None
    y_paths: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return len(self.x_final)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def coupled(self) -> np.ndarray:
        return self.coupling_step >= 0

    @property
    def coupled_fraction(self) -> float:
        ok = ~self.flagged
        return float(self.coupled[ok].mean())

    @property
    def coupling_times(self) -> np.ndarray:
        return np.where(self.coupled, self.coupling_step * self.step, np.inf)

    def weight_mean(self) -> tuple[float, float]:
        w = self.weights[~self.flagged]
        return float(w.mean()), float(w.std(ddof=1) / math.sqrt(len(w)))

    def entropy(self) -> tuple[float, float]:
        """Monte Carlo ``E[R log R]`` and its standard error."""
        lw = self.log_weights[~self.flagged]
        v = np.exp(lw) * lw
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("path,coupling_step,log_weight\n")
            for i, (k, lw) in enumerate(zip(self.coupling_step, self.log_weights)):
                fh.write(f"{i},{k},{lw!r}\n")


def _pair_start(spec, x0, y0, n):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if x0.shape != (spec.dim,) or y0.shape != (spec.dim,):
        raise ValueError(f"starting points must have {spec.dim} coordinates")
    if n < 1:
        raise ValueError("n_paths must be >= 1")
    return np.repeat(x0[None], n, 0), np.repeat(y0[None], n, 0), float(np.linalg.norm(x0 - y0))


def _run(kind, spec, x0, y0, h, t, n_paths, seed, store_paths, extra_drift):
    """Shared loop. ``extra_drift(k, X, Y, u, r)`` returns the additional
    drift of Y and the Girsanov integrand ``q`` with
    ``log R += -<q, dB> - |q|^2 h / 2`` on uncoupled paths."""
    steps = n_steps(h, t)
    X, Y, dist0 = _pair_start(spec, x0, y0, n_paths)
    Z, sig = spec.Z, spec.sigma
    band = glue_band(spec, h)
    step = np.full(n_paths, -1, dtype=np.int64)
    log_w = np.zeros(n_paths)
    glued_early = np.zeros(n_paths, dtype=bool)
    if dist0 < band:
        step[:] = 0
        Y = X.copy()
    xs = ys = None
    if store_paths:
        xs = np.empty((n_paths, steps + 1, spec.dim))
        ys = np.empty_like(xs)
        xs[:, 0], ys[:, 0] = X, Y
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(steps):
            dB = brownian_step(seed, k, n_paths, spec.dim, h)
            live = step < 0
            X_new = X + Z(X) * h + sig.apply(X, dB)
            if live.any():
                u = X - Y
                r = np.sqrt((u * u).sum(axis=1))
                Y_new = Y + Z(Y) * h + sig.apply(Y, dB)
                if extra_drift is not None:
                    b, q = extra_drift(k, X, Y, u, r)
                    b = np.where(live[:, None], b, 0.0)
                    q = np.where(live[:, None], q, 0.0)
                    Y_new = Y_new + b * h
                    log_w -= (q * dB).sum(axis=1) + 0.5 * (q * q).sum(axis=1) * h
                    overshoot = r < 2.0 * np.sqrt((b * b).sum(axis=1)) * h
                else:
                    overshoot = np.zeros(n_paths, dtype=bool)
                un = X_new - Y_new
                r_new = np.sqrt((un * un).sum(axis=1))
                hit = live & ((r_new < band) | overshoot)
                glued_early |= hit & overshoot & (r_new >= band)
                step[hit] = k + 1
                Y = np.where((step >= 0)[:, None], X_new, Y_new)
            else:
                Y = X_new
            X = X_new
            if store_paths:
                xs[:, k + 1], ys[:, k + 1] = X, Y
    flagged = check_flagged(X) | check_flagged(Y) | ~np.isfinite(log_w)
    flags = {
        "band_fraction": float((step > 0).mean()),
        "glue_band_active": bool((step > 0).mean() > GLUE_FLAG_LIMIT),
        "overshoot_glued": int(glued_early.sum()),
    }
    return dict(kind=kind, x_final=X, y_final=Y, coupling_step=step, log_weights=log_w, step=h,
                horizon=t, seed=seed, band=band, flagged=flagged, x_paths=xs, y_paths=ys,
                flags=flags), dist0


def couple_synchronous(spec: DiffusionSpec, x0, y0, h: float, t: float, n_paths: int, seed: int,
                       store_paths: bool = False) -> CouplingRun:
    """Both components driven by the same Brownian increments."""
    fields, _ = _run("synchronous", spec, x0, y0, h, t, n_paths, seed, store_paths, None)
    return CouplingRun(**fields)


def couple_forced(spec: DiffusionSpec, x0, y0, h: float, t: float, n_paths: int, seed: int,
                  store_paths: bool = False) -> CouplingRun:
    """Y pulled towards X by ``eta_s (X-Y)/|X-Y|`` so that they meet by ``t``.

    Uses the drift-only constant ``spec.K_drift_claim``. Requires unit noise.
    """
    if not spec.unit_noise:
        raise ValueError("forced coupling needs the identity diffusion")
    dist = float(np.linalg.norm(np.asarray(x0, float) - np.asarray(y0, float)))
    sched = EtaSchedule(spec.K_drift_claim, t, dist)
    eta = sched.on_grid(h)

    def extra(k, X, Y, u, r):
        e = u / np.where(r > 0, r, 1.0)[:, None]
        b = eta[k] * e
        return b, b

    fields, _ = _run("forced", spec, x0, y0, h, t, n_paths, seed, store_paths, extra)
    fields["eta_schedule"] = eta
    run = CouplingRun(**fields)
    failed = 1.0 - run.coupled_fraction
    run.flags["coarse_discretization"] = failed > FORCED_FAIL_LIMIT
    if failed > FORCED_FAIL_LIMIT:
        warnings.warn(f"{failed:.1%} of forced paths did not couple by the horizon; step too coarse")
    return run


def couple_girsanov_tt(spec: DiffusionSpec, x0, y0, h: float, t: float, n_paths: int, seed: int,
                       store_paths: bool = False) -> CouplingRun:
    """Coupling with the extra drift ``sigma(Y) sigma(X)^{-1} (X-Y) / xi_s``.

    ``xi_s = (1 - e^{K(s-t)})/K`` with ``K = spec.K_claim``. Under the
    weighted measure ``R_t dP`` the component Y is a copy of the diffusion
    from ``y0`` and meets X by time ``t``.
    """
    K = spec.K_claim
    xis = xi(K, t, np.arange(n_steps(h, t)) * h)
    sig = spec.sigma

    def extra(k, X, Y, u, r):
        w = sig.solve(X, u) / xis[k]
        return sig.apply(Y, w), w

    fields, _ = _run("girsanov_tt", spec, x0, y0, h, t, n_paths, seed, store_paths, extra)
    fields["eta_schedule"] = 1.0 / xis
    return CouplingRun(**fields)


@dataclass(frozen=True)
class TailEstimate:
    t: np.ndarray
    tail: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_paths: int

    def csv(self) -> str:
        rows = ["t,tail,se,lower,upper"]
        rows += [f"{a!r},{b!r},{c!r},{d!r},{e!r}" for a, b, c, d, e in
                 zip(self.t, self.tail, self.se, self.lower, self.upper)]
        return "\n".join(rows) + "\n"


def coupling_time_tail(run: CouplingRun, t_grid, confidence: float = 0.95) -> TailEstimate:
    """Empirical ``P(T > t)`` with Wilson score intervals."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    times = run.coupling_times[~run.flagged]
    n = len(times)
    p = (times[None, :] > t_grid[:, None] + 1e-12).mean(axis=1)
    z = stats.norm.ppf(0.5 + confidence / 2)
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    return TailEstimate(t_grid, p, np.sqrt(p * (1 - p) / n), np.clip(centre - half, 0, 1),
                        np.clip(centre + half, 0, 1), n)
