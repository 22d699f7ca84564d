"""Exception hierarchy shared by every module.

The CLI maps each family to an exit code: configuration problems exit 2,
bad or incomplete data exit 3, physically impossible requests exit 4.
"""


class SpopoError(Exception):
    exit_code = 1


class ConfigurationError(SpopoError, ValueError):
    exit_code = 2


class DataError(SpopoError, ValueError):
    exit_code = 3


class InsufficientDataError(DataError):
    pass


class IncompleteBundleError(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("incomplete trace bundle, missing shapes: " + ", ".join(self.missing))


class DegenerateStateError(DataError):
    pass


class PhysicalityError(SpopoError, ValueError):
    exit_code = 4


class AboveThresholdError(PhysicalityError):
    pass


class InvalidStateError(PhysicalityError):
    pass
