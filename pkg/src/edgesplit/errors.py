"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Evaluation was requested at (or beyond) a singularity."""


class InfeasibleLinkError(ValueError):
    """A user is associated with a server it cannot reach (zero rate)."""


@dataclass(frozen=True)
class Violation:
    """One violated constraint: which one, where, and by how much."""

    constraint: str
    index: tuple
    amount: float

    def __str__(self) -> str:
        return f"{self.constraint}{list(self.index)}: violated by {self.amount:.3e}"


class InfeasibleDecisionError(ValueError):
    """A decision violates the feasible set; carries the full violation report."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class SolverError(RuntimeError):
    """Internal solver failure (bracket not found, LP infeasible, ...)."""


class StageError(RuntimeError):
    """Failure inside one stage of the overall scheme, tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")
