"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation problems exit 1,
estimation failures exit 2, and data/IO problems exit 3.
"""


class SynthPanelError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SynthPanelError):
    """Invalid panel, configuration, or argument values."""


class EstimationError(SynthPanelError):
    """An estimator or inference procedure could not produce a result."""


class DataError(SynthPanelError):
    """Malformed or unreadable input data."""
