# errors.py
"""Exception hierarchy shared by every module of the package."""


class PnlsviError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMdpError(PnlsviError, ValueError):
    pass


class InvalidPolicyError(PnlsviError, ValueError):
    pass


class DatasetError(PnlsviError, ValueError):
    pass


class EnumerationCapExceeded(PnlsviError, ValueError):
    """A class or a pair loop would exceed the configured enumeration budget."""


class SingularSystemError(PnlsviError, ArithmeticError):
    pass


class OracleInconsistencyError(PnlsviError, RuntimeError):
    """The binary search did not terminate within its iteration guard."""


class ConfigError(PnlsviError, ValueError):
    pass
