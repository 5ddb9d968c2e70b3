"""Result records shared by the verifiers and the experiment runner."""

from __future__ import annotations

import math
from dataclasses import dataclass

ANALYTIC_TOL = 1e-9

ROW_HEADER = "check_id,lhs,rhs,margin_se,verdict,n_paths,seed"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


@dataclass(frozen=True)
class CheckRow:
    check_id: str
    lhs: float
    rhs: float
    margin_se: float
    verdict: str  # pass / fail / error / exploratory-pass / exploratory-fail
    n_paths: int
    seed: int

    def csv(self) -> str:
        return ",".join(_fmt(v) for v in (self.check_id, float(self.lhs), float(self.rhs),
                                          float(self.margin_se), self.verdict, int(self.n_paths),
                                          int(self.seed)))

    @property
    def counts(self) -> bool:
        return not self.verdict.startswith("exploratory")

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"


def _margin(slack: float, se: float) -> float:
    if se > 0:
        return slack / se
    if slack == 0:
        return 0.0
    return math.copysign(math.inf, slack)


@dataclass(frozen=True)
class EstimateReport:
    """A Monte Carlo estimate, optionally judged against a reference value.

    The verdict is ``|estimate - reference| <= k * se + budget``, where
    ``se`` combines the estimate's and the reference's standard errors.
    """

    estimate: float
    std_error: float
    n_paths: int
    reference: float | None = None
    reference_se: float = 0.0
    k: float = 4.0
    budget: float = 0.0

    @property
    def combined_se(self) -> float:
        return math.hypot(self.std_error, self.reference_se)

    @property
    def margin_se(self) -> float:
        if self.reference is None:
            return math.nan
        slack = self.k * self.combined_se + self.budget + ANALYTIC_TOL - abs(self.estimate - self.reference)
        return _margin(slack, self.combined_se)

    @property
    def verdict(self) -> bool:
        if self.reference is None:
            return True
        return abs(self.estimate - self.reference) <= self.k * self.combined_se + self.budget + ANALYTIC_TOL

    def against(self, reference: float, reference_se: float = 0.0, k: float = 4.0,
                budget: float = 0.0) -> "EstimateReport":
        return EstimateReport(self.estimate, self.std_error, self.n_paths, reference,
                              reference_se, k, budget)

    def row(self, check_id: str, seed: int) -> CheckRow:
        ref = math.nan if self.reference is None else self.reference
        return CheckRow(check_id, self.estimate, ref, self.margin_se,
                        "pass" if self.verdict else "fail", self.n_paths, seed)


@dataclass(frozen=True)
class InequalityReport:
    """Evidence for ``lhs <= rhs``.

    Monte Carlo sides pass when ``lhs <= rhs + k * se + budget``; analytic
    sides (``se == 0``) are held to :data:`ANALYTIC_TOL`.
    """

    lhs: float
    rhs: float
    se: float = 0.0
    n_paths: int = 0
    k: float = 3.0
    budget: float = 0.0

    @property
    def analytic(self) -> bool:
        return self.se == 0.0 and self.n_paths == 0

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def margin_se(self) -> float:
        return _margin(self.rhs + self.budget - self.lhs, self.se)

    @property
    def verdict(self) -> bool:
        return self.lhs <= self.rhs + self.k * self.se + self.budget + ANALYTIC_TOL

    def row(self, check_id: str, seed: int) -> CheckRow:
        return CheckRow(check_id, self.lhs, self.rhs, self.margin_se,
                        "pass" if self.verdict else "fail", self.n_paths, seed)
