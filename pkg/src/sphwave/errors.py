"""Exception types shared across the package."""


class FormatError(ValueError):
    """A file does not conform to one of the sphwave on-disk formats."""


class RankDeficientError(ValueError):
    """A least-squares system is numerically rank deficient."""


class DegenerateFieldError(ValueError):
    """An input field carries no energy where the operation needs some."""
