"""Exception types shared across the toolkit."""


class RefineryError(Exception):
    """Base class for every toolkit-specific error."""


class InvalidGraspError(RefineryError):
    """A grasp pose or rectangle violates its geometric invariants."""


class EmptyGroundTruthError(RefineryError):
    """An operation that needs ground-truth grasps received none."""


class UndefinedAngleError(RefineryError):
    """Angle recovery was asked for a (cos, sin) pair with no direction."""


class ShapeMismatchError(RefineryError):
    """Heatmap grids with incompatible dimensions were combined."""


class EncodeError(RefineryError):
    """An annotation cannot be painted onto the requested grid."""


class ParseError(RefineryError):
    """A text record could not be parsed; carries file and line context."""

    def __init__(self, message, path=None, line=None):
        super().__init__(message)
        self.path = path
        self.line = line


class DatasetIOError(RefineryError):
    """A dataset directory or file could not be read or written."""


class IngestError(RefineryError):
    """A prediction stream was rejected as a whole."""


class IntegrityError(RefineryError):
    """Cross-referenced records disagree (orphan ids, broken links)."""


class ContractViolation(RefineryError):
    """A caller broke an operation's precondition."""


class StateError(RefineryError):
    """An illegal queue-state transition was attempted."""


class ReplayError(RefineryError):
    """The event log cannot be applied to the given base version."""


class LedgerIntegrityError(RefineryError):
    """The event log is corrupt; carries the first bad sequence number."""

    def __init__(self, message, sequence=None):
        super().__init__(message)
        self.sequence = sequence


class NotFoundError(RefineryError):
    """A referenced entity does not exist."""


class ConfigError(RefineryError):
    """Run configuration is invalid or incomplete."""
