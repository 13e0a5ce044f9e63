"""Exception hierarchy shared by the library and the command line.

The CLI maps these onto exit codes: usage errors -> 1, configuration
errors -> 2, numerical failures -> 3.
"""


class WavebreakError(Exception):
    exit_code = 3


class DomainError(WavebreakError, ValueError):
    """Argument outside the domain of a closed-form expression."""

    exit_code = 1


class ParameterError(WavebreakError, ValueError):
    exit_code = 1


class UsageError(WavebreakError, ValueError):
    exit_code = 1


class ConfigError(WavebreakError, ValueError):
    """Invalid scenario, kernel or grid configuration."""

    exit_code = 2


class IntegrationError(WavebreakError, RuntimeError):
    """Step size underflow before any outcome was reached.

    ``partial`` holds whatever trajectory was accumulated.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ResolutionLossError(WavebreakError, RuntimeError):
    def __init__(self, message, series=None):
        super().__init__(message)
        self.series = series
