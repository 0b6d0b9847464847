"""Exception hierarchy shared by all modules.

``ConfigError`` maps to CLI exit code 2; every other ``SurfsdError`` is a
numerical failure (exit code 3).
"""


class SurfsdError(Exception):
    """Base class for all library errors."""


class ConfigError(SurfsdError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class NoConvergence(SurfsdError):
    """An iterative procedure missed its tolerance.

    ``result`` carries the best iterate when one is available.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class OutsideBand(SurfsdError):
    pass


class BoxTooSmall(SurfsdError):
    pass


class EmptySurface(SurfsdError):
    pass


class DegenerateInput(SurfsdError):
    pass


class NotWatertight(SurfsdError):
    pass


class NotTangential(SurfsdError):
    pass


class SingularSystem(SurfsdError):
    pass


class DegenerateLevels(SurfsdError):
    pass


class InvalidLevels(ConfigError):
    def __init__(self, message):
        super().__init__("levels", message)
