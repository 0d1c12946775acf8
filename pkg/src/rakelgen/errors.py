"""Shared exception and warning types."""


class ValidationError(ValueError):
    """An input file, configuration value, or argument violates a documented invariant."""


class LabelCoverageWarning(UserWarning):
    """Emitted when a sampled ensemble leaves some labels uncovered."""
