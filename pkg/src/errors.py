"""Exception hierarchy shared by the library and the command line."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_VALIDATION = 5


class StressBDError(Exception):
    """Base error; every subclass maps to a process exit code."""
    exit_code = 1


class ConfigurationError(StressBDError):
    """Bad configuration, shapes, parameter ranges or user selections"""
    exit_code = EXIT_CONFIG


class DatasetIOError(StressBDError):
    """Reading or writing a dataset, checkpoint or report failed"""
    exit_code = EXIT_IO


class ChecksumError(DatasetIOError):
    pass


class SchemaVersionError(DatasetIOError):
    pass


class ValidationError(StressBDError):
    """A numerical or contract check failed"""
    exit_code = EXIT_VALIDATION


class NumericalError(ValidationError):
    pass


class ClusteringError(ValidationError):
    pass


class StaleClusterError(ClusteringError):
    pass
