"""Exception hierarchy shared by the library and the command line."""

from __future__ import annotations


class StickySimError(Exception):
    """Base class for every error raised by this package."""


class SpecificationError(StickySimError):
    """A process, scale/speed or tube description violates its invariants.

    ``violations`` holds one human readable entry per failed check so callers
    can report all problems at once instead of the first one only.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ExpressionError(StickySimError):
    """Syntax or evaluation error located at a byte offset of the source text."""

    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.message = message
        self.position = position
        self.text = text
        where = "" if position is None else f" at offset {position}"
        super().__init__(f"{message}{where}")


class NumericalFailure(StickySimError):
    """Non-finite values, quadrature failure or a path leaving the tabulated window."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class DomainError(StickySimError, ValueError):
    """Argument outside the domain of a closed-form law or a lookup table."""


class EnsembleError(StickySimError):
    """One or more paths of a Monte Carlo ensemble failed."""

    def __init__(self, failures: dict[int, str]):
        self.failures = dict(sorted(failures.items()))
        shown = ", ".join(str(i) for i in list(self.failures)[:20])
        more = "" if len(self.failures) <= 20 else f" (+{len(self.failures) - 20} more)"
        super().__init__(f"{len(self.failures)} path(s) failed: {shown}{more}")
