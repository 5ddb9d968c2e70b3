"""Catalogue of test functions with the metadata the verifiers rely on.

Each entry knows its oscillation, Lipschitz constant, a bound on third
directional derivatives (for finite-difference bias budgets) and, where
available, its exact mean under an isotropic Gaussian law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng

# max over s of |d^3/ds^3 exp(-s^2/2)|, attained at s = sqrt(3 - sqrt(6))
_GAUSS_D3 = 1.3801
# max |tanh'''|
_TANH_D3 = 2.0


@dataclass(frozen=True)
class TestFunction:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    osc: float
    lipschitz: float
    infimum: float
    d3_bound: float = math.inf
    gaussian_mean: Callable[[np.ndarray, float], float] | None = None
    # closed form of f**p, when it stays in the catalogue
    powered: Callable[[float], "TestFunction"] | None = None

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.f(np.atleast_2d(x))

    def grad_sq(self, x):
        g = self.grad(np.atleast_2d(x))
        return (g * g).sum(axis=1)


def _vec(a, dim):
    a = np.zeros(dim) if a is None else np.asarray(a, dtype=float).reshape(-1)
    if a.shape != (dim,):
        raise ValueError(f"parameter must have {dim} coordinates")
    return a


def constant(dim: int, c: float = 1.0) -> TestFunction:
    return TestFunction(
        f"const({c})",
        lambda x: np.full(len(x), float(c)),
        lambda x: np.zeros_like(x),
        0.0, 0.0, float(c), 0.0,
        lambda m, v: float(c),
        lambda p: constant(dim, float(c) ** p),
    )


def coord(dim: int, i: int = 0) -> TestFunction:
    """Projection onto coordinate ``i`` (unbounded)."""
    e = np.eye(dim)[i]
    return TestFunction(
        f"coord{i}",
        lambda x: x[:, i].copy(),
        lambda x: np.broadcast_to(e, x.shape),
        math.inf, 1.0, -math.inf, 0.0,
        lambda m, v: float(np.asarray(m)[i]),
    )


def bump(dim: int, center=None, width: float = 1.0, offset: float = 0.0) -> TestFunction:
    """``offset + exp(-|x - center|^2 / (2 width^2))``."""
    c = _vec(center, dim)
    w2 = width * width

    def f(x):
        r2 = ((x - c) ** 2).sum(axis=1)
        return offset + np.exp(-0.5 * r2 / w2)

    def grad(x):
        r2 = ((x - c) ** 2).sum(axis=1)
        return -(x - c) / w2 * np.exp(-0.5 * r2 / w2)[:, None]

    def gmean(m, v):
        s = w2 + v
        return offset + (w2 / s) ** (dim / 2) * math.exp(-0.5 * float(((np.asarray(m) - c) ** 2).sum()) / s)

    return TestFunction(f"bump(w={width},off={offset})", f, grad, 1.0,
                        1.0 / (width * math.sqrt(math.e)), offset,
                        _GAUSS_D3 / width ** 3, gmean)


def smoothstep(dim: int, a=None) -> TestFunction:
    """``(1 + tanh(<a, x>)) / 2``."""
    a = _vec(a if a is not None else np.eye(dim)[0], dim)
    na = float(np.linalg.norm(a))

    def f(x):
        return 0.5 * (1.0 + np.tanh(x @ a))

    def grad(x):
        return 0.5 / np.cosh(x @ a)[:, None] ** 2 * a

    return TestFunction("smoothstep", f, grad, 1.0, na / 2, 0.0, _TANH_D3 * na ** 3 / 2)


def explin(dim: int, a=None) -> TestFunction:
    """``exp(<a, x>)``: unbounded, but every Gaussian moment is explicit."""
    a = _vec(a if a is not None else np.eye(dim)[0], dim)
    na = float(np.linalg.norm(a))

    def f(x):
        return np.exp(x @ a)

    def grad(x):
        return np.exp(x @ a)[:, None] * a

    def gmean(m, v):
        return math.exp(float(np.dot(a, m)) + 0.5 * na * na * v)

    return TestFunction("explin", f, grad, math.inf, math.inf, 0.0, math.inf, gmean,
                        lambda p: explin(dim, p * a))


CATALOGUE = {
    "const": constant,
    "coord": coord,
    "bump": bump,
    "smoothstep": smoothstep,
    "explin": explin,
}


def make(name: str, dim: int, **params) -> TestFunction:
    try:
        return CATALOGUE[name](dim, **params)
    except KeyError:
        raise ValueError(f"unknown test function {name!r}") from None


def power(tf: TestFunction, p: float) -> TestFunction:
    """``f**p`` for non-negative ``f``."""
    if tf.infimum < 0:
        raise ValueError("power needs a non-negative function")
    if tf.powered is not None:
        return tf.powered(p)
    return TestFunction(f"{tf.name}^{p}", lambda x: tf.f(x) ** p, lambda x: p * tf.f(x)[:, None] ** (p - 1) * tf.grad(x),
                        math.inf, math.inf, tf.infimum ** p)


@dataclass(frozen=True)
class MetadataCheck:
    osc_seen: float
    lipschitz_seen: float
    ok: bool


def verify_metadata(tf: TestFunction, dim: int, radius: float = 6.0, n: int = 20001,
                    seed: int = 0) -> MetadataCheck:
    """Compare ``osc`` and Lipschitz metadata with values seen on probes.

    Passes when the observed values do not exceed the metadata and, for
    finite metadata, come within 1% of it.
    """
    g = rng.generator(seed, rng.INSTANCES, 2)
    if dim == 1:
        x = np.linspace(-radius, radius, n)[:, None]
    else:
        x = (g.random((n, dim)) * 2 - 1) * radius
        x[0] = 0.0
    vals = tf.f(x)
    osc = float(vals.max() - vals.min())
    lip = float(np.sqrt(tf.grad_sq(x)).max())

    def close(seen, meta):
        if math.isinf(meta):
            return True
        return seen <= meta * 1.01 + 1e-12 and seen >= meta * 0.99 - 1e-12

    return MetadataCheck(osc, lip, close(osc, tf.osc) and close(lip, tf.lipschitz))
