"""Exception hierarchy shared by all modules.

Every failure mode of the engine maps to one of these classes so that the
CLI can translate exceptions into stable exit codes: parse errors exit 2,
precondition violations exit 3, everything else computational exits 1.
"""


class FormalFTError(Exception):
    """Base class for all engine errors."""


class ComputationError(FormalFTError):
    """Something went wrong while computing (exit code 1)."""


class PreconditionError(FormalFTError):
    """An operation was invoked outside its contract (exit code 3)."""


# -- scalar / series layer -------------------------------------------------

class IncompatibleRamification(PreconditionError):
    """Arithmetic between series over different covers without lifting."""


class NotAUnit(PreconditionError):
    """Inversion of a series with no certified nonzero leading coefficient."""


class NotPolynomialTail(PreconditionError):
    """A substitution required finite support but the series has a tail."""


# -- connection layer ------------------------------------------------------

class ChartMismatch(PreconditionError):
    """Binary operation on connections living on different charts."""


class PrecisionExhausted(ComputationError):
    """The escalation schedule ran out before the result stabilized."""


class NotStabilized(ComputationError):
    """A truncated computation failed to agree on consecutive depths."""


class HorizontalSectionExists(PreconditionError):
    """An operation assumed no flat sections but found one."""


class SlopeOutOfRange(PreconditionError):
    """The input's slopes violate the transform's slope window."""


class EmptyOutput(FormalFTError):
    """The transform of a pure slope-one module vanishes identically."""


class CyclicSearchFailed(ComputationError):
    """The deterministic cyclic-vector schedule was exhausted."""


class DecompositionNeedsExtension(ComputationError):
    """Slope splitting of a raw matrix needs a larger coefficient field."""


class EigenvalueOutsideField(PreconditionError):
    """A requested eigenvalue does not lie in the declared field."""


class NotGoodPair(PreconditionError):
    """A lattice pair failed verification where a good pair was required."""


class ZeroOperator(PreconditionError):
    """The zero operator has no companion realization."""


class FieldTooSmall(PreconditionError):
    """A singular point does not split over the declared field."""

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class NotMiddleExtension(PreconditionError):
    """The global module has a delta sub- or quotient module."""


class OracleMismatch(ComputationError):
    """Two supposedly equivalent computation routes disagreed."""


class BasisSizeMismatch(ComputationError):
    """A transform basis came out with the wrong dimension count."""


# -- manifest / CLI --------------------------------------------------------

class ParseError(FormalFTError):
    """Syntax error in a manifest or literal (exit code 2)."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class SemanticError(FormalFTError):
    """A manifest parsed but violates a structural rule (exit code 2)."""
