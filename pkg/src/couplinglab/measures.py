"""Exact optimal transport between finitely supported probability measures.

The primal transport problem is solved with a small dense simplex (Bland's
rule, two phases). The Kantorovich dual is solved as its own LP through
HiGHS, so primal and dual values come from two different solvers and their
agreement is a real check rather than a tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

SUM_TOL = 1e-12
MARGINAL_TOL = 1e-10
FEAS_TOL = 1e-10
DROP_BELOW = 1e-15
MAX_CELLS = 64
_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability vector on an ordered, labelled finite set.

    ``coords`` is optional and only needed by the one-dimensional operations
    (:func:`monotone_map_1d`, :func:`fkg_check`).
    """

    points: tuple
    weights: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        points = tuple(self.points)
        w = np.asarray(self.weights, dtype=float).copy()
        if w.ndim != 1 or len(w) != len(points):
            raise ValueError("weights must be a vector with one entry per point")
        if len(points) == 0:
            raise ValueError("empty measure")
        if len(set(points)) != len(points):
            raise ValueError("labels must be distinct")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", w)
        if self.coords is not None:
            c = np.asarray(self.coords, dtype=float).copy()
            if c.shape != w.shape:
                raise ValueError("coords must match points")
            if len(np.unique(c)) != len(c):
                raise ValueError("coordinates must be distinct")
            c.flags.writeable = False
            object.__setattr__(self, "coords", c)

    def __len__(self):
        return len(self.points)

    @classmethod
    def on_line(cls, coords: Sequence[float], weights: Sequence[float]) -> "DiscreteMeasure":
        """Measure on real points, labelled by the coordinates themselves."""
        c = np.asarray(coords, dtype=float)
        return cls(tuple(float(x) for x in c), weights, c)

    @classmethod
    def dirac(cls, points: Sequence, at) -> "DiscreteMeasure":
        w = np.zeros(len(points))
        w[list(points).index(at)] = 1.0
        return cls(tuple(points), w)

    def integrate(self, f: Sequence[float]) -> float:
        return float(np.dot(self.weights, np.asarray(f, dtype=float)))


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    metric_flag: bool = False

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2:
            raise ValueError("cost must be a matrix")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("cost entries must be finite and non-negative")
        if self.metric_flag:
            n = c.shape[0]
            if c.shape[1] != n:
                raise ValueError("a metric cost must be square")
            if np.any(np.abs(np.diag(c)) > SUM_TOL) or np.any(np.abs(c - c.T) > SUM_TOL):
                raise ValueError("metric cost needs zero diagonal and symmetry")
            # c[i,k] <= c[i,j] + c[j,k] for all i, j, k
            slack = c[:, None, :] - c[:, :, None] - c[None, :, :]
            if slack.max() > SUM_TOL:
                raise ValueError("metric cost violates the triangle inequality")
        c.flags.writeable = False
        object.__setattr__(self, "entries", c)

    @property
    def shape(self):
        return self.entries.shape

    @classmethod
    def discrete(cls, n: int) -> "CostMatrix":
        return cls(1.0 - np.eye(n), metric_flag=True)

    @classmethod
    def from_coords(cls, x: Sequence[float], y: Sequence[float] | None = None) -> "CostMatrix":
        x = np.asarray(x, dtype=float)
        same = y is None
        y = x if same else np.asarray(y, dtype=float)
        return cls(np.abs(x[:, None] - y[None, :]), metric_flag=same)


@dataclass(frozen=True)
class CouplingMatrix:
    entries: np.ndarray
    row_marginal: DiscreteMeasure
    col_marginal: DiscreteMeasure

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.shape != (len(self.row_marginal), len(self.col_marginal)):
            raise ValueError("coupling shape does not match its marginals")
        if np.any(e < 0):
            raise ValueError("coupling has negative mass")
        if np.max(np.abs(e.sum(axis=1) - self.row_marginal.weights)) > MARGINAL_TOL:
            raise ValueError("row sums differ from the first marginal")
        if np.max(np.abs(e.sum(axis=0) - self.col_marginal.weights)) > MARGINAL_TOL:
            raise ValueError("column sums differ from the second marginal")
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    def transport_cost(self, cost: CostMatrix, p: float = 1.0) -> float:
        return float(np.sum(cost.entries ** p * self.entries))

    def off_diagonal_mass(self) -> float:
        return float(self.entries.sum() - np.trace(self.entries))


@dataclass(frozen=True)
class DualCertificate:
    f_values: np.ndarray
    g_values: np.ndarray
    p: float

    def violation(self, cost: CostMatrix) -> float:
        """Largest amount by which ``f(x) <= g(y) + cost(x, y)**p`` fails."""
        gap = self.f_values[:, None] - self.g_values[None, :] - cost.entries ** self.p
        return float(max(gap.max(), 0.0))

    def value(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        return mu.integrate(self.f_values) - nu.integrate(self.g_values)


# ---------------------------------------------------------------------------
# dense simplex


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _iterate(T: np.ndarray, basis: list[int], n_enter: int) -> None:
    m = T.shape[0] - 1
    while True:
        reduced = T[-1, :n_enter]
        candidates = np.flatnonzero(reduced < -_PIVOT_TOL)
        if candidates.size == 0:
            return
        col = int(candidates[0])  # Bland: lowest index enters
        column = T[:m, col]
        rows = np.flatnonzero(column > _PIVOT_TOL)
        if rows.size == 0:
            raise RuntimeError("unbounded LP")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + _PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))  # Bland: lowest basic index leaves
        _pivot(T, row, col)
        basis[row] = col


def simplex(c: np.ndarray, A: np.ndarray, b: np.ndarray):
    """Minimise ``c @ x`` subject to ``A @ x == b``, ``x >= 0``.

    Returns ``(x, y)`` with ``y`` the equality multipliers, so that
    ``c - A.T @ y >= 0`` and ``b @ y == c @ x`` at the optimum.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _iterate(T, basis, n)
    if -T[-1, -1] > 1e-9:
        raise RuntimeError("infeasible LP")
    for row in range(m):
        if basis[row] >= n:
            cols = np.flatnonzero(np.abs(T[row, :n]) > _PIVOT_TOL)
            if cols.size:
                _pivot(T, row, int(cols[0]))
                basis[row] = int(cols[0])
    T[-1, :] = 0.0
    T[-1, :n] = c
    for row, j in enumerate(basis):
        if j < n and c[j] != 0.0:
            T[-1] -= c[j] * T[row]
    _iterate(T, basis, n)
    x = np.zeros(n)
    for row, j in enumerate(basis):
        if j < n:
            x[j] = T[row, -1]
    y = -T[-1, n : n + m]
    y[neg] *= -1
    return np.maximum(x, 0.0), y


# ---------------------------------------------------------------------------
# transport


def _check_dims(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix, p: float):
    if cost.shape != (len(mu), len(nu)):
        raise ValueError(f"cost shape {cost.shape} does not match supports ({len(mu)}, {len(nu)})")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if len(mu) * len(nu) > MAX_CELLS:
        raise ValueError(f"instance has more than {MAX_CELLS} cells")


def _solve_transport(mu, nu, cost, p):
    """Primal optimum ``(cost_p, plan, f, g)`` on the full supports."""
    _check_dims(mu, nu, cost, p)
    C = cost.entries ** p
    rows = np.flatnonzero(mu.weights > DROP_BELOW)
    cols = np.flatnonzero(nu.weights > DROP_BELOW)
    n, m = len(rows), len(cols)
    Cs = C[np.ix_(rows, cols)]
    A = np.zeros((n + m - 1, n * m))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1.0
    for j in range(m - 1):
        A[n + j, j::m] = 1.0
    b = np.concatenate([mu.weights[rows], nu.weights[cols[:-1]]])
    x, y = simplex(Cs.ravel(), A, b)
    plan = np.zeros(C.shape)
    plan[np.ix_(rows, cols)] = x.reshape(n, m)
    f = np.zeros(len(mu))
    g = np.zeros(len(nu))
    f[rows] = y[:n]
    g[cols[:-1]] = -y[n:]
    f, g = _extend_potentials(C, rows, cols, f, g)
    return float(np.sum(Cs * x.reshape(n, m))), plan, f, g


def _extend_potentials(C, rows, cols, f, g):
    """Fill potentials on dropped points so feasibility holds everywhere,
    then shift so that ``min g == 0``."""
    all_cols = np.arange(C.shape[1])
    for j in np.setdiff1d(all_cols, cols):
        g[j] = np.max(f[rows] - C[rows, j])
    for i in np.setdiff1d(np.arange(C.shape[0]), rows):
        f[i] = np.min(g + C[i])
    shift = g.min()
    return f - shift, g - shift


def wasserstein_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix, p: float = 1.0):
    """``W_p`` for ``cost`` and an optimal plan.

    Returns ``(value, plan)`` where ``value`` is the p-th root of the minimal
    expected ``cost**p``.
    """
    cost_p, plan, _, _ = _solve_transport(mu, nu, cost, p)
    return max(cost_p, 0.0) ** (1.0 / p), CouplingMatrix(plan, mu, nu)


def transport_potentials(mu, nu, cost, p=1.0) -> DualCertificate:
    """Dual certificate read off the optimal simplex basis of the primal."""
    _, _, f, g = _solve_transport(mu, nu, cost, p)
    return DualCertificate(f, g, p)


def kantorovich_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostMatrix, p: float = 1.0):
    """Maximise ``mu(f) - nu(g)`` over ``f(x) <= g(y) + cost(x, y)**p``.

    Solved directly as an LP with HiGHS. Returns ``(value, certificate)``
    with the certificate shifted so that ``min g == 0``.
    """
    _check_dims(mu, nu, cost, p)
    C = cost.entries ** p
    rows = np.flatnonzero(mu.weights > DROP_BELOW)
    cols = np.flatnonzero(nu.weights > DROP_BELOW)
    n, m = len(rows), len(cols)
    A = np.zeros((n * m, n + m))
    for i in range(n):
        for j in range(m):
            A[i * m + j, i] = 1.0
            A[i * m + j, n + j] = -1.0
    obj = np.concatenate([-mu.weights[rows], nu.weights[cols]])
    res = linprog(obj, A_ub=A, b_ub=C[np.ix_(rows, cols)].ravel(),
                  bounds=[(None, None)] * (n + m), method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"dual LP failed: {res.message}")
    f = np.zeros(len(mu))
    g = np.zeros(len(nu))
    f[rows] = res.x[:n]
    g[cols] = res.x[n:]
    f, g = _extend_potentials(C, rows, cols, f, g)
    cert = DualCertificate(f, g, p)
    return cert.value(mu, nu), cert


def _common_ground(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.points != nu.points:
        raise ValueError("measures must live on the same labelled ground set")


def total_variation_half(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``sup_A |mu(A) - nu(A)|``, i.e. the mass of the positive part of ``mu - nu``."""
    _common_ground(mu, nu)
    return float(np.clip(mu.weights - nu.weights, 0.0, None).sum())


def wasserstein_coupling_tv(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Optimal coupling for the discrete cost built from the Hahn decomposition.

    Mass ``mu ^ nu`` stays on the diagonal; the excess ``(mu - nu)^+`` is
    spread proportionally over the deficit ``(mu - nu)^-``. Returns
    ``(tv_half, plan)``.
    """
    _common_ground(mu, nu)
    diff = mu.weights - nu.weights
    plus = np.clip(diff, 0.0, None)
    minus = np.clip(-diff, 0.0, None)
    plan = np.diag(mu.weights - plus)
    if minus.sum() > 0:
        plan = plan + np.outer(plus, minus) / minus.sum()
    return float(plus.sum()), CouplingMatrix(plan, mu, nu)


def monotone_map_1d(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Quantile (comonotone) coupling of two measures on the line.

    Optimal for every convex cost of ``|x - y|``; returns ``(plan, w2)`` with
    ``w2`` the quadratic Wasserstein distance it achieves.
    """
    if mu.coords is None or nu.coords is None:
        raise ValueError("monotone_map_1d needs real coordinates on both measures")
    oi = np.argsort(mu.coords)
    oj = np.argsort(nu.coords)
    a = mu.weights[oi].copy()
    b = nu.weights[oj].copy()
    plan = np.zeros((len(mu), len(nu)))
    i = j = 0
    while i < len(a) and j < len(b):
        q = min(a[i], b[j])
        plan[oi[i], oj[j]] += q
        a[i] -= q
        b[j] -= q
        # advance whichever side is exhausted; the last cell absorbs rounding
        if a[i] <= b[j] and i < len(a) - 1:
            i += 1
        elif j < len(b) - 1:
            j += 1
        else:
            i += 1
    plan = np.clip(plan, 0.0, None)
    dist2 = (mu.coords[:, None] - nu.coords[None, :]) ** 2
    return CouplingMatrix(plan, mu, nu), math.sqrt(float(np.sum(plan * dist2)))


@dataclass(frozen=True)
class FKGResult:
    lhs: float
    rhs: float
    holds: bool


def fkg_check(mu: DiscreteMeasure, nu: DiscreteMeasure, f: Sequence[float], g: Sequence[float]) -> FKGResult:
    """Evaluate both sides of ``mu(fg) + nu(fg) >= mu(f) nu(g) + nu(f) mu(g)``."""
    _common_ground(mu, nu)
    if mu.coords is None:
        raise ValueError("FKG check needs an ordered real ground set")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    order = np.argsort(mu.coords)
    for name, h in (("f", f), ("g", g)):
        if h.shape != mu.weights.shape:
            raise ValueError(f"{name} must have one value per point")
        if np.any(np.diff(h[order]) < 0):
            raise ValueError(f"{name} is not non-decreasing")
    fg = f * g
    lhs = mu.integrate(fg) + nu.integrate(fg)
    rhs = mu.integrate(f) * nu.integrate(g) + nu.integrate(f) * mu.integrate(g)
    return FKGResult(lhs, rhs, lhs >= rhs - 1e-12)


# ---------------------------------------------------------------------------
# random instances and the plain-text format


def random_measure(rng: np.random.Generator, points: Sequence, coords=None, sparsity: float = 0.0) -> DiscreteMeasure:
    w = rng.exponential(size=len(points))
    if sparsity > 0:
        w[rng.random(len(points)) < sparsity] = 0.0
        if w.sum() == 0:
            w[rng.integers(len(points))] = 1.0
    return DiscreteMeasure(tuple(points), w / w.sum(), coords)


def random_metric(rng: np.random.Generator, n: int, dim: int = 2) -> CostMatrix:
    """Euclidean distances between ``n`` random points in the plane."""
    z = rng.normal(size=(n, dim))
    d = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(-1))
    return CostMatrix(d, metric_flag=True)


@dataclass
class TransportInstance:
    instance_id: str
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    cost: CostMatrix
    p: float = 1.0


@dataclass
class TransportSummary:
    instance_id: str
    primal: float
    dual: float
    gap: float
    tv_half: float = field(default=float("nan"))

    def csv_row(self) -> str:
        return f"{self.instance_id},{self.primal!r},{self.dual!r},{self.gap!r},{self.tv_half!r}"


TRANSPORT_CSV_HEADER = "instance_id,primal,dual,gap,tv_half"


def _parse_block(lines: list[str], default_id: str) -> TransportInstance:
    instance_id, p = default_id, 1.0
    body = []
    for line in lines:
        head, _, rest = line.partition(" ")
        if head == "instance":
            instance_id = rest.strip()
        elif head == "p":
            p = float(rest)
        else:
            body.append(line)
    if len(body) < 3:
        raise ValueError(f"instance {instance_id}: need labels, two weight lines and a cost matrix")
    labels = body[0].split()
    if labels and labels[0] == "labels":
        labels = labels[1:]
    try:
        coords = np.array([float(s) for s in labels])
    except ValueError:
        coords = None
    n = len(labels)
    mu_w = [float(s) for s in body[1].split()]
    nu_w = [float(s) for s in body[2].split()]
    cost = [[float(s) for s in row.split()] for row in body[3:]]
    if len(cost) != n or any(len(r) != n for r in cost):
        raise ValueError(f"instance {instance_id}: cost must be {n}x{n}")
    if len(mu_w) != n or len(nu_w) != n:
        raise ValueError(f"instance {instance_id}: weight lines must have {n} entries")
    mu = DiscreteMeasure(tuple(labels), mu_w, coords)
    nu = DiscreteMeasure(tuple(labels), nu_w, coords)
    return TransportInstance(instance_id, mu, nu, CostMatrix(cost), p)


def parse_instances(text: str) -> list[TransportInstance]:
    """Parse blank-line separated instances.

    Each block is a ``labels`` header line, one weight line per measure and
    then the cost matrix, one row per line. Optional ``instance <id>`` and
    ``p <exponent>`` lines may precede the header; ``#`` starts a comment.
    """
    blocks, current = [], []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            current.append(line)
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return [_parse_block(b, str(k)) for k, b in enumerate(blocks)]


def read_instances(path: str | Path) -> list[TransportInstance]:
    return parse_instances(Path(path).read_text())


def format_instance(inst: TransportInstance) -> str:
    lines = [f"instance {inst.instance_id}", f"p {inst.p!r}",
             "labels " + " ".join(str(x) for x in inst.mu.points),
             " ".join(repr(float(w)) for w in inst.mu.weights),
             " ".join(repr(float(w)) for w in inst.nu.weights)]
    lines += [" ".join(repr(float(c)) for c in row) for row in inst.cost.entries]
    return "\n".join(lines) + "\n"


def summarize(inst: TransportInstance) -> TransportSummary:
    """Primal cost (``W_p**p``), dual value, their gap and ``tv_half``."""
    value, _ = wasserstein_lp(inst.mu, inst.nu, inst.cost, inst.p)
    primal = value ** inst.p
    dual, _ = kantorovich_dual(inst.mu, inst.nu, inst.cost, inst.p)
    tv = total_variation_half(inst.mu, inst.nu) if inst.mu.points == inst.nu.points else float("nan")
    return TransportSummary(inst.instance_id, primal, dual, abs(primal - dual), tv)


def write_summaries(rows: Iterable[TransportSummary], path: str | Path) -> None:
    out = [TRANSPORT_CSV_HEADER] + [r.csv_row() for r in rows]
    Path(path).write_text("\n".join(out) + "\n")
