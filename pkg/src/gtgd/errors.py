"""Shared exception taxonomy.

Every error the library raises deliberately derives from GtgdError, so the CLI
can map failures to exit codes without pattern-matching on messages.  Budget
family errors mean "ran out of budget, answer unknown"; the rest are input or
precondition problems.
"""


class GtgdError(Exception):
    exit_code = 65


class ModelError(GtgdError):
    """Structurally invalid model object (bad arity, unsafe query, ...)."""


class ParseError(GtgdError):
    def __init__(self, line, column, message):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class ArityConflictError(ParseError):
    pass


class UnknownSectionError(ParseError):
    pass


class NotGuardedError(GtgdError):
    pass


class NotLinearError(GtgdError):
    pass


class NotFullError(GtgdError):
    pass


class TriggerError(GtgdError):
    """A purported trigger is not a homomorphism of the rule body."""


class ArityMismatchError(GtgdError):
    pass


class DifferingConstraintsError(GtgdError):
    pass


class PreconditionViolatedError(GtgdError):
    pass


class KBelowThresholdError(GtgdError):
    """Requested width parameter below the method's validity threshold."""

    def __init__(self, k, threshold, message=None):
        super().__init__(message or f"k={k} below required threshold {threshold}")
        self.k = k
        self.threshold = threshold


class InvalidMinorMapError(GtgdError):
    pass


class NotASubsetError(GtgdError):
    pass


class LemmaPreconditionError(GtgdError):
    def __init__(self, item, message):
        super().__init__(f"precondition {item} failed: {message}")
        self.item = item


class NoGridMinorError(GtgdError):
    pass


class WidthExceededError(GtgdError):
    pass


class SizeLimitError(GtgdError):
    """Graph too large for the exact solver; carries interval bounds."""

    def __init__(self, lower, upper, message=None):
        super().__init__(message or f"exact solver limit exceeded; treewidth in [{lower}, {upper}]")
        self.lower = lower
        self.upper = upper


class BudgetError(GtgdError):
    exit_code = 2


class BudgetExceededError(BudgetError):
    pass


class SaturationCapError(BudgetError):
    pass


class TypeSpaceCapError(BudgetError):
    pass


class RewritingCapError(BudgetError):
    pass


class EnumerationCapError(BudgetError):
    pass


class WitnessNotFoundError(BudgetError):
    pass
