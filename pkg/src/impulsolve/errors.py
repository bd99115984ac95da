"""Exception types shared across the package.

The CLI maps these onto process exit codes: format/validation problems exit
with 2, budget and numerical-guard aborts with 3, anything else with 1.
"""


class ImpulsolveError(Exception):
    """Base class for all package-specific errors."""


class TreeFormatError(ImpulsolveError):
    """Scenario tree document cannot be parsed (missing fields, bad types)."""


class TreeValidationError(ImpulsolveError):
    """Scenario tree document parsed but violates structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SpecFormatError(ImpulsolveError):
    """Problem document cannot be parsed."""


class SpecValidationError(ImpulsolveError):
    """Problem document parsed but is inconsistent."""


class StrategyFormatError(ImpulsolveError):
    """Strategy document cannot be parsed."""


class InadmissibleStrategyError(ImpulsolveError):
    """A strategy fires a stage before the execution delay has elapsed."""


class BudgetExceededError(ImpulsolveError):
    """A structural guard tripped (node count, augmented states, enumeration)."""


class NumericalGuardError(ImpulsolveError):
    """A computation was rejected a priori (exponential overflow guard)."""
