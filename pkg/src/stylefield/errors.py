"""Exception types shared across the library."""


class StyleFieldError(Exception):
    """Base class for all library errors."""


class DomainError(StyleFieldError, ValueError):
    """An argument value is outside the operation's domain."""


class OutOfBoundsError(DomainError):
    """A spatial query fell outside the scene bounding box."""


class StageError(StyleFieldError, RuntimeError):
    """An operation was invoked in the wrong pipeline stage."""


class ConfigurationError(StyleFieldError, ValueError):
    """A configuration or matching file is inconsistent with the run."""


class MatchingModeError(DomainError):
    """The requested matching mode does not fit the region counts."""


class DegenerateRegionError(DomainError):
    """A region has no usable pixels or a zero-norm feature mean."""


class DegeneratePaletteError(DomainError):
    """Pixel statistics are too singular to fit a color transform."""


class ExternalDependencyError(StyleFieldError, RuntimeError):
    """An optional external backend or weight file is unavailable."""
