"""Exception types shared across the package."""


class BBMDError(Exception):
    """Base class for all package errors."""


class StructuralError(BBMDError, ValueError):
    """Inputs with mismatched dimensions or an empty/ill-formed domain."""


class ParameterInfeasible(BBMDError, ValueError):
    """A parameter bundle violates an invariant or admits no instance."""


class HypothesisViolated(BBMDError, ValueError):
    """A bound was requested outside the range where it is known to hold."""


class DomainTooLarge(BBMDError, ValueError):
    """Exact enumeration was requested for a domain above the configured limit."""


class BudgetExceeded(BBMDError, RuntimeError):
    """An oracle session ran out of billable queries."""


class FeasibilityViolation(BBMDError, AssertionError):
    """A transformation emitted an allocation it could not certify as feasible."""


class ConfigError(BBMDError, ValueError):
    """A configuration file or CLI flag could not be interpreted."""
