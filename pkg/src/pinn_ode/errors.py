"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A user-supplied configuration value is invalid or inconsistent."""


class NumericsError(RuntimeError):
    """A numerical computation produced non-finite or unusable values.

    Carries optional context (iteration index, offending time point) so
    callers can report where a run went wrong.
    """

    def __init__(self, message, *, iteration=None, t=None):
        super().__init__(message)
        self.iteration = iteration
        self.t = t
