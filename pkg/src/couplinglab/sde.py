"""Euler-Maruyama simulation of ``dX = Z(X) dt + sigma(X) dB``.

Drifts and diffusion coefficients come from a small registry so that a
:class:`DiffusionSpec` stays plain data (ids plus parameters) and can be
named from a flat config file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import rng

FLAG_LIMIT = 0.01


class SimulationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# drift forms


class LinearDrift:
    """``Z(x) = A x + b``."""

    differentiable = True

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.zeros(self.A.shape[0]) if b is None else np.asarray(b, dtype=float)
        self.scalar = None
        if np.allclose(self.A, self.A[0, 0] * np.eye(len(self.A)), atol=0.0):
            self.scalar = float(self.A[0, 0])

    def __call__(self, x):
        if self.scalar is not None:
            out = self.scalar * x
        else:
            out = x @ self.A.T
        if np.any(self.b):
            out = out + self.b
        return out

    def directional(self, x, v):
        """``grad_v Z(x)`` for each row of ``x``."""
        return np.broadcast_to(self.A @ v, x.shape)

    @property
    def scale(self):
        return float(np.linalg.norm(self.A, 2))


class SinPerturbedDrift:
    """``Z(x) = -theta x + amp * sin(x)`` coordinatewise.

    The one-sided constant is ``-theta + |amp|``: ``sin`` is 1-Lipschitz.
    """

    differentiable = True

    def __init__(self, theta=1.0, amp=0.5):
        self.theta = float(theta)
        self.amp = float(amp)

    def __call__(self, x):
        return -self.theta * x + self.amp * np.sin(x)

    def directional(self, x, v):
        return (-self.theta + self.amp * np.cos(x)) * v

    @property
    def scale(self):
        return abs(self.theta) + abs(self.amp)


def _linear(dim, A=None, b=None):
    return LinearDrift(np.zeros((dim, dim)) if A is None else A, b)


def _ou(dim, theta=1.0):
    return LinearDrift(-float(theta) * np.eye(dim))


def _quadratic(dim, Q=None):
    """Gradient flow of ``-x.Q.x / 2``."""
    Q = np.eye(dim) if Q is None else np.asarray(Q, dtype=float)
    return LinearDrift(-0.5 * (Q + Q.T))


DRIFTS = {
    "zero": lambda dim: LinearDrift(np.zeros((dim, dim))),
    "linear": _linear,
    "ou": _ou,
    "quadratic": _quadratic,
    "sin_ou": lambda dim, theta=1.0, amp=0.5: SinPerturbedDrift(theta, amp),
}


# ---------------------------------------------------------------------------
# diffusion forms


class ConstantDiffusion:
    def __init__(self, S):
        self.S = np.atleast_2d(np.asarray(S, dtype=float))
        self.identity = np.array_equal(self.S, np.eye(len(self.S)))
        self._inv = np.linalg.inv(self.S)

    def apply(self, x, dB):
        return dB if self.identity else dB @ self.S.T

    def solve(self, x, v):
        return v if self.identity else v @ self._inv.T

    def matrix(self, x):
        return np.broadcast_to(self.S, (len(x),) + self.S.shape)

    def min_eig(self, x):
        """Smallest eigenvalue of ``sigma* sigma`` at each row of ``x``."""
        return np.full(len(x), np.linalg.eigvalsh(self.S.T @ self.S).min())

    lipschitz = 0.0


class ModulatedDiffusion:
    """``sigma(x) = (s0 + s1 sin(x_1)) I``; Lipschitz with constant ``|s1|``."""

    identity = False

    def __init__(self, dim, s0=1.5, s1=0.3):
        if s0 - abs(s1) <= 0:
            raise ValueError("modulated diffusion must stay elliptic: s0 > |s1|")
        self.dim = dim
        self.s0 = float(s0)
        self.s1 = float(s1)

    def _scale(self, x):
        return self.s0 + self.s1 * np.sin(x[:, 0])

    def apply(self, x, dB):
        return self._scale(x)[:, None] * dB

    def solve(self, x, v):
        return v / self._scale(x)[:, None]

    def matrix(self, x):
        return self._scale(x)[:, None, None] * np.eye(self.dim)

    def min_eig(self, x):
        return self._scale(x) ** 2

    @property
    def lipschitz(self):
        return abs(self.s1)


DIFFUSIONS = {
    "identity": lambda dim: ConstantDiffusion(np.eye(dim)),
    "constant": lambda dim, S: ConstantDiffusion(S),
    "modulated": lambda dim, s0=1.5, s1=0.3: ModulatedDiffusion(dim, s0, s1),
}


@dataclass(frozen=True)
class DiffusionSpec:
    """One diffusion law, as data.

    Two one-sided constants are carried because the Harnack-type bounds use
    different conventions: ``K_drift_claim`` bounds
    ``<Z(x)-Z(y), x-y>/|x-y|^2`` while ``K_claim`` bounds
    ``(|sigma(x)-sigma(y)|_HS^2 + 2<x-y, Z(x)-Z(y)>)/|x-y|^2``. For an OU
    drift ``-x`` with unit noise these are -1 and -2.
    """

    dim: int
    drift: str = "zero"
    diffusion: str = "identity"
    drift_params: dict = field(default_factory=dict)
    diffusion_params: dict = field(default_factory=dict)
    K_claim: float = 0.0
    K_drift_claim: float = 0.0
    lambda_claim: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.drift not in DRIFTS:
            raise ValueError(f"unknown drift id {self.drift!r}")
        if self.diffusion not in DIFFUSIONS:
            raise ValueError(f"unknown diffusion id {self.diffusion!r}")
        if not self.lambda_claim > 0:
            raise ValueError("lambda_claim must be positive")

    @cached_property
    def Z(self):
        return DRIFTS[self.drift](self.dim, **self.drift_params)

    @cached_property
    def sigma(self):
        return DIFFUSIONS[self.diffusion](self.dim, **self.diffusion_params)

    @property
    def unit_noise(self) -> bool:
        return self.diffusion == "identity"

    def gaussian_law(self, x, t):
        """Exact ``(mean, variance per coordinate)`` of ``X_t`` for BM and
        isotropic OU with unit noise; ``None`` otherwise."""
        if not self.unit_noise or self.drift not in ("zero", "ou"):
            return None
        x = np.asarray(x, dtype=float)
        if self.drift == "zero":
            return x.copy(), float(t)
        theta = float(self.drift_params.get("theta", 1.0))
        return x * math.exp(-theta * t), -math.expm1(-2 * theta * t) / (2 * theta)


def _ou_spec(dim, name):
    return DiffusionSpec(dim, "ou", K_claim=-2.0, K_drift_claim=-1.0, name=name)


SPECS = {
    "bm1": DiffusionSpec(1, "zero", name="bm1"),
    "bm2": DiffusionSpec(2, "zero", name="bm2"),
    "ou1": _ou_spec(1, "ou1"),
    "ou2": _ou_spec(2, "ou2"),
    "sin_ou1": DiffusionSpec(1, "sin_ou", drift_params={"theta": 1.0, "amp": 0.5},
                             K_claim=-1.0, K_drift_claim=-0.5, name="sin_ou1"),
    "sin_ou2": DiffusionSpec(2, "sin_ou", drift_params={"theta": 1.0, "amp": 0.5},
                             K_claim=-1.0, K_drift_claim=-0.5, name="sin_ou2"),
    # (AA): |s1|^2 d + 2(-1) = 0.09 - 2
    "mod_ou1": DiffusionSpec(1, "ou", "modulated", diffusion_params={"s0": 1.0, "s1": 0.3},
                             K_claim=-1.91, K_drift_claim=-1.0, lambda_claim=0.49, name="mod_ou1"),
}


def get_spec(spec_id: str) -> DiffusionSpec:
    try:
        return SPECS[spec_id]
    except KeyError:
        raise ValueError(f"unknown spec id {spec_id!r}; known: {sorted(SPECS)}") from None


# ---------------------------------------------------------------------------
# simulation


def n_steps(h: float, t: float) -> int:
    if not h > 0:
        raise ValueError("step h must be positive")
    if not t >= h:
        raise ValueError("horizon must be at least one step")
    steps = int(round(t / h))
    if abs(steps * h - t) > 1e-12 * max(1.0, t):
        raise ValueError(f"horizon {t} is not a whole number of steps of size {h}")
    return steps


def brownian_step(seed: int, k: int, n: int, dim: int, h: float) -> np.ndarray:
    """Brownian increments for step ``k``; row ``i`` belongs to path ``i``."""
    return rng.normals(seed, rng.BROWNIAN, k, n, dim) * math.sqrt(h)


def _start(start, dim, n):
    x = np.asarray(start, dtype=float).reshape(-1)
    if x.shape != (dim,):
        raise ValueError(f"start must have {dim} coordinates")
    return np.repeat(x[None, :], n, axis=0)


def check_flagged(final: np.ndarray) -> np.ndarray:
    flagged = ~np.isfinite(final).all(axis=1)
    if flagged.mean() > FLAG_LIMIT:
        raise SimulationError(f"{flagged.sum()} of {len(final)} paths diverged")
    return flagged


@dataclass(frozen=True)
class PathBundle:
    spec: DiffusionSpec
    start: np.ndarray
    step: float
    horizon: float
    n_paths: int
    seed: int
    final: np.ndarray
    flagged: np.ndarray
    states: np.ndarray | None = None
    increments: np.ndarray | None = None

    @property
    def n_flagged(self) -> int:
        return int(self.flagged.sum())

    def to_csv(self, path: str | Path) -> None:
        """Write ``path,step,coord,value`` rows (needs stored states)."""
        if self.states is None:
            raise ValueError("bundle was simulated without stored states")
        n, s, d = self.states.shape
        p, k, c = np.meshgrid(np.arange(n), np.arange(s), np.arange(d), indexing="ij")
        with open(path, "w") as fh:
            fh.write("path,step,coord,value\n")
            for row in zip(p.ravel(), k.ravel(), c.ravel(), self.states.ravel()):
                fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]!r}\n")


def simulate(spec: DiffusionSpec, start, h: float, t: float, n_paths: int, seed: int,
             store: bool = True) -> PathBundle:
    """Euler-Maruyama paths from ``start``.

    ``store=False`` keeps only terminal states, which is what the Monte
    Carlo estimators need at large path counts.
    """
    steps = n_steps(h, t)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    d = spec.dim
    x = _start(start, d, n_paths)
    Z, sig = spec.Z, spec.sigma
    states = increments = None
    if store:
        states = np.empty((n_paths, steps + 1, d))
        increments = np.empty((n_paths, steps, d))
        states[:, 0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            dB = brownian_step(seed, k, n_paths, d, h)
            x = x + Z(x) * h + sig.apply(x, dB)
            if store:
                states[:, k + 1] = x
                increments[:, k] = dB
    flagged = check_flagged(x)
    return PathBundle(spec, np.asarray(start, dtype=float).reshape(-1), h, t, n_paths, seed,
                      x, flagged, states, increments)


@dataclass(frozen=True)
class KCheck:
    K_hat: float
    passed: bool
    form: str


def one_sided_ratio(spec: DiffusionSpec, x: np.ndarray, y: np.ndarray, form: str = "AA") -> np.ndarray:
    """Per-pair one-sided Lipschitz ratio in the ``"AA"`` or ``"K"`` form."""
    u = x - y
    r2 = (u * u).sum(axis=1)
    inner = (u * (spec.Z(x) - spec.Z(y))).sum(axis=1)
    if form == "K":
        return inner / r2
    if form != "AA":
        raise ValueError("form must be 'AA' or 'K'")
    hs = ((spec.sigma.matrix(x) - spec.sigma.matrix(y)) ** 2).sum(axis=(1, 2))
    return (hs + 2 * inner) / r2


def check_one_sided_K(spec: DiffusionSpec, n_probes: int, radius: float, seed: int,
                      form: str = "AA") -> KCheck:
    """Largest sampled one-sided ratio over pairs in a ball, against the claim."""
    g = rng.generator(seed, rng.INSTANCES)
    d = spec.dim

    def ball(n):
        z = g.standard_normal((n, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return z * radius * g.random((n, 1)) ** (1.0 / d)

    x = ball(n_probes)
    y = ball(n_probes)
    keep = np.linalg.norm(x - y, axis=1) > 1e-9
    k_hat = float(one_sided_ratio(spec, x[keep], y[keep], form).max())
    claim = spec.K_claim if form == "AA" else spec.K_drift_claim
    return KCheck(k_hat, k_hat <= claim + 1e-6, form)


def check_ellipticity(spec: DiffusionSpec, n_probes: int, radius: float, seed: int) -> bool:
    """``sigma* sigma >= lambda_claim I`` at sampled points."""
    g = rng.generator(seed, rng.INSTANCES, 1)
    x = (g.random((n_probes, spec.dim)) * 2 - 1) * radius
    return bool(spec.sigma.min_eig(x).min() >= spec.lambda_claim - 1e-9)
