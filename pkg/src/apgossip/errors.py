"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: parse/contract/config/validation
errors are usage-class failures (exit 2), numerical errors are runtime
failures (exit 1).
"""


class Error(Exception):
    """Base class for all apgossip errors."""


class ParseError(Error):
    """Malformed input text (dataset, matrix, or model file)."""


class ContractError(Error):
    """A function precondition was violated by the caller."""


class ConfigError(Error):
    """An experiment or partition configuration is invalid."""


class ValidationError(Error):
    """A loaded artifact failed its structural checks."""


class NumericalError(Error):
    """An iterative computation diverged or produced non-finite values."""
