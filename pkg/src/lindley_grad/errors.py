"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the command line
front end can report failures in a stable form.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Issue:
    code: str
    message: str


class LindleyGradError(Exception):
    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ParseError(LindleyGradError):
    code = "PARSE"


class ValidationError(LindleyGradError):
    """One or more scenario assumptions are violated.

    ``issues`` holds every problem found, not just the first.
    """

    code = "VALIDATION"

    def __init__(self, message: str, code: str | None = None, issues: list[Issue] | None = None):
        super().__init__(message, code)
        self.issues = list(issues) if issues else [Issue(self.code, message)]


class CapabilityError(ValidationError):
    code = "ASSUMPTION_4"


class SmoothnessError(ValidationError):
    code = "ASSUMPTION_2_PRIME"


class DegenerateDensityError(LindleyGradError):
    code = "DEGENERATE_DENSITY"


class ParameterRegionError(LindleyGradError):
    code = "PARAMETER_REGION"


class ShapeMismatchError(LindleyGradError):
    code = "SHAPE_MISMATCH"


class UnsupportedScenarioError(LindleyGradError):
    code = "UNSUPPORTED_SCENARIO"


class ConvergenceError(LindleyGradError):
    code = "CONVERGENCE"


class BoundaryError(LindleyGradError):
    code = "BOUNDARY"
