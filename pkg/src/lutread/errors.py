"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract (2 = usage/config,
3 = verification failure, 4 = I/O).
"""


class LutreadError(Exception):
    """Base class for all toolkit errors."""


class UsageError(LutreadError):
    """Bad arguments or configuration supplied by the caller."""


class FormatError(LutreadError):
    """Malformed on-disk artifact (bad magic, truncated file, ...)."""


class ValidationError(LutreadError):
    """Data violates a declared invariant (e.g. sample out of range)."""


class ConfigurationError(UsageError):
    """A config object is internally inconsistent (e.g. zero-length window)."""


class FeatureOverflowError(LutreadError):
    """An integrator output does not fit its feature word width."""


class InfeasibleTopologyError(LutreadError):
    """A network topology cannot be built from the given design point."""


class TrainingError(LutreadError):
    """Training diverged; carries the epoch index."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class TableSizeError(LutreadError):
    """A neuron's truth-table input width exceeds the supported maximum."""


class InterfaceError(LutreadError):
    """Shape mismatch between a feature vector and a table network."""


class MetricError(LutreadError):
    """A metric is undefined for the given data (e.g. a class is absent)."""


class CalibrationError(LutreadError):
    """Calibration regression could not be fit."""


class SearchError(LutreadError):
    """The search could not proceed (e.g. no feasible design points)."""


class ConsistencyError(LutreadError):
    """Artifacts passed together do not describe the same design."""


class HdlParseError(LutreadError):
    """Text handed to the interpreter is outside the emitted dialect."""


class VerificationError(LutreadError):
    """A hard equivalence gate failed (software vs. emitted hardware)."""
