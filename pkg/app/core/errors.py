"""Exception hierarchy shared by the library, the CLI and the HTTP surface."""

from __future__ import annotations

from typing import List, Optional


class PhaseRetrievalError(Exception):
    """Base error carrying a machine-readable category and process exit code."""

    category = "internal"
    exit_code = 1

    def to_payload(self) -> dict:
        return {"status": "error", "category": self.category, "message": str(self)}


class InvalidInputError(PhaseRetrievalError, ValueError):
    """An operation precondition was violated."""

    category = "input"
    exit_code = 2


class ConfigError(PhaseRetrievalError):
    """Run configuration failed schema or range validation."""

    category = "config"
    exit_code = 2

    def __init__(self, message: str, violations: Optional[List[str]] = None) -> None:
        super().__init__(message)
        self.violations = list(violations or [])

    def to_payload(self) -> dict:
        payload = super().to_payload()
        payload["violations"] = self.violations
        return payload


class SolverError(PhaseRetrievalError):
    """Linear program or pipeline stage failed."""

    category = "solver"
    exit_code = 3

    def __init__(self, message: str, stage: str, iteration: Optional[int] = None) -> None:
        prefix = f"[{stage}]" if iteration is None else f"[{stage} @ iteration {iteration}]"
        super().__init__(f"{prefix} {message}")
        self.detail = message
        self.stage = stage
        self.iteration = iteration

    def to_payload(self) -> dict:
        payload = super().to_payload()
        payload["stage"] = self.stage
        payload["iteration"] = self.iteration
        return payload


class ArtifactError(PhaseRetrievalError):
    """Artifacts could not be written."""

    category = "io"
    exit_code = 4
