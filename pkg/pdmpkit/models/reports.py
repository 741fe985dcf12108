"""Data models for estimates and experiment reports."""

from __future__ import annotations

import math
from enum import Enum
from typing import ClassVar, Optional

from pydantic import BaseModel, Field


class EstimateMethod(str, Enum):
    IID = "iid"
    BATCH_MEANS = "batch_means"


class EstimateWithError(BaseModel):
    """A Monte Carlo estimate with its standard error."""

    mean: float
    stderr: float = Field(ge=0)
    n: int = Field(ge=1, description="Sample count (draws, or events for batch means)")
    method: EstimateMethod = Field(default=EstimateMethod.IID)
    n_batches: Optional[int] = Field(default=None, description="Number of batches for batch means")
    inner_error: float = Field(default=0.0, ge=0, description="Recorded error of inner quadrature rules")

    def z_score(self, target: float = 0.0) -> float:
        diff = self.mean - target
        if self.stderr > 0.0:
            return diff / self.stderr
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)

    def covers(self, target: float, n_sigma: float = 4.0) -> bool:
        return abs(self.mean - target) <= n_sigma * self.stderr

    def to_summary(self) -> str:
        tag = self.method.value if self.n_batches is None else f"{self.method.value}/{self.n_batches}"
        return f"{self.mean:.6g} ± {self.stderr:.3g} (n={self.n}, {tag})"


class KsCheck(BaseModel):
    """One distribution comparison of an equivalence battery."""

    check: str
    statistic: float
    p_value: float
    passed: bool

    def csv_row(self) -> list:
        return [self.check, self.statistic, self.p_value, self.passed]


class EquivalenceReport(BaseModel):
    checks: list[KsCheck] = Field(default_factory=list)
    alpha: float = 0.01

    CSV_HEADER: ClassVar[list[str]] = ["check", "statistic", "p_value", "pass"]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def csv_rows(self) -> list[list]:
        return [c.csv_row() for c in self.checks]

    def to_summary(self) -> str:
        lines = [f"Equivalence: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  {c.check}: D={c.statistic:.4f} p={c.p_value:.4f} {'ok' if c.passed else 'FAIL'}")
        return "\n".join(lines)


class CouplingRow(BaseModel):
    t: float
    p_decouple: float
    stderr: float
    bound: float
    passed: bool

    def csv_row(self) -> list:
        return [self.t, self.p_decouple, self.stderr, self.bound, self.passed]


class CouplingReport(BaseModel):
    """Decoupling probabilities against 1 - exp(-int g), plus per-chain marginal checks."""

    rows: list[CouplingRow] = Field(default_factory=list)
    marginals: list[KsCheck] = Field(default_factory=list)
    n_runs: int = 0

    CSV_HEADER: ClassVar[list[str]] = ["t", "p_decouple", "stderr", "bound", "pass"]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows) and all(m.passed for m in self.marginals)

    def csv_rows(self) -> list[list]:
        return [r.csv_row() for r in self.rows]

    def to_summary(self) -> str:
        lines = [f"Coupling ({self.n_runs} runs): {'PASS' if self.passed else 'FAIL'}"]
        for r in self.rows:
            lines.append(
                f"  t={r.t:g}: p={r.p_decouple:.4f} ± {r.stderr:.4f} bound={r.bound:.4f} "
                f"{'ok' if r.passed else 'FAIL'}"
            )
        for m in self.marginals:
            lines.append(f"  {m.check} KS p={m.p_value:.4f} {'ok' if m.passed else 'FAIL'}")
        return "\n".join(lines)


class InvarianceRow(BaseModel):
    function: str
    estimate: EstimateWithError
    z: float
    passed: bool

    def csv_row(self) -> list:
        return [self.function, self.estimate.mean, self.estimate.stderr, self.z, self.passed]


class InvarianceReport(BaseModel):
    """E[Af] under a candidate measure for each test function f."""

    rows: list[InvarianceRow] = Field(default_factory=list)
    threshold: float = 4.0

    CSV_HEADER: ClassVar[list[str]] = ["function", "mean", "stderr", "z", "pass"]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def csv_rows(self) -> list[list]:
        return [r.csv_row() for r in self.rows]

    def to_summary(self) -> str:
        lines = [f"Invariance (|z| <= {self.threshold:g}): {'PASS' if self.passed else 'FAIL'}"]
        for r in self.rows:
            lines.append(f"  {r.function}: {r.estimate.to_summary()} z={r.z:.2f}")
        return "\n".join(lines)


class BiasRow(BaseModel):
    M: float
    function: str
    estimate: float
    stderr: float
    bias: float
    bias_stderr: float
    bound_proxy: float

    def csv_row(self) -> list:
        return [self.M, self.function, self.estimate, self.stderr, self.bias, self.bias_stderr, self.bound_proxy]


class BiasSweepReport(BaseModel):
    """Per-cap ergodic estimates, biases against the exact sampler and B(M)."""

    rows: list[BiasRow] = Field(default_factory=list)
    reference: dict[str, EstimateWithError] = Field(default_factory=dict)

    CSV_HEADER: ClassVar[list[str]] = ["M", "function", "estimate", "stderr", "bias", "bias_stderr", "bound_proxy"]

    @property
    def proxy_decreasing(self) -> bool:
        """B(M) strictly decreasing over the finite caps."""
        caps = sorted({r.M: r.bound_proxy for r in self.rows if math.isfinite(r.M)}.items())
        return all(b < a for (_, a), (_, b) in zip(caps, caps[1:]))

    @property
    def bias_non_increasing(self) -> bool:
        """|bias| never grows between consecutive finite caps beyond 2 combined stderrs."""
        for function in {r.function for r in self.rows}:
            rows = [r for r in self.rows_for(function) if math.isfinite(r.M)]
            for lo, hi in zip(rows, rows[1:]):
                slack = 2.0 * math.hypot(lo.bias_stderr, hi.bias_stderr)
                if abs(hi.bias) > abs(lo.bias) + slack:
                    return False
        return True

    @property
    def passed(self) -> bool:
        """Largest cap unbiased within 4 sigma for every function, |bias| non-increasing, B(M) decreasing."""
        for function in {r.function for r in self.rows}:
            top = self.rows_for(function)[-1]
            if abs(top.bias) > 4.0 * top.bias_stderr:
                return False
        return self.bias_non_increasing and self.proxy_decreasing

    def csv_rows(self) -> list[list]:
        return [r.csv_row() for r in self.rows]

    def rows_for(self, function: str) -> list[BiasRow]:
        return sorted((r for r in self.rows if r.function == function), key=lambda r: r.M)

    def to_summary(self) -> str:
        lines = ["Bias sweep:"]
        for r in self.rows:
            lines.append(
                f"  M={r.M:g} {r.function}: bias={r.bias:.4g} ± {r.bias_stderr:.3g} B(M)={r.bound_proxy:.4g}"
            )
        return "\n".join(lines)


class ExperimentResult(BaseModel):
    """What a subcommand hands back to the command line."""

    experiment: str
    exit_code: int = Field(ge=0)
    summary: str = ""
    outputs: list[str] = Field(default_factory=list, description="Files written by the run")


class SimulationSummary(BaseModel):
    """One-line account of a simulation run."""

    events: int
    true_jumps: int
    phantom_jumps: int
    wall_time: float
    status: str

    @property
    def events_per_sec(self) -> float:
        return self.events / self.wall_time if self.wall_time > 0 else math.inf

    def to_summary(self) -> str:
        return (
            f"events={self.events} true={self.true_jumps} phantom={self.phantom_jumps} "
            f"wall={self.wall_time:.3f}s rate={self.events_per_sec:.3g}/s status={self.status}"
        )
