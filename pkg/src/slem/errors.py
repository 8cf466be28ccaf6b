# Exception taxonomy: ConfigError aborts before any computation (CLI exit 1),
# NumericalError is a hard numerical failure mid-computation (CLI exit 2).


class SlemError(Exception):
    pass


class ConfigError(SlemError):
    pass


class NumericalError(SlemError):
    pass


class CollinearityError(NumericalError):
    def __init__(self, message, columns=None):
        super().__init__(message)
        self.columns = tuple(columns) if columns is not None else ()
