"""Exception hierarchy shared by the simulators, the comparator and the CLI."""


class HpcflowError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(HpcflowError, ValueError):
    """A model or solver parameter is outside its admissible range."""


class InputError(HpcflowError, ValueError):
    """Field data handed to a simulator is invalid (e.g. negative density)."""


class DomainError(HpcflowError, ValueError):
    """A point evaluation was requested outside the field's domain."""


class DegenerateConfigurationError(HpcflowError, ValueError):
    """The configuration makes a derived quantity undefined (e.g. all rates zero)."""


class ConfigError(HpcflowError, ValueError):
    """A scenario configuration failed to parse or validate.

    ``problems`` holds every violation found, so callers can report them all at once.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SimulationError(HpcflowError, RuntimeError):
    """A time integration aborted (non-finite state, invariant violation)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
