"""Exception and warning types raised across the package."""


class EtUpscaleError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EtUpscaleError, ValueError):
    pass


class UnsupportedLatitudeError(InvalidInputError):
    pass


class InvalidSeriesError(InvalidInputError):
    pass


class LaggedInputError(InvalidInputError):
    """A physics error raised while processing one day of a meteorology window."""

    def __init__(self, lag, cause):
        self.lag = lag
        self.cause = cause
        super().__init__(f"lag {lag}: {cause}")


class SchemaVersionError(EtUpscaleError):
    pass


class SchemaMismatchError(EtUpscaleError):
    pass


class DuplicateKeyError(EtUpscaleError, ValueError):
    pass


class HeaderError(EtUpscaleError, ValueError):
    pass


class RowParseError(EtUpscaleError, ValueError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class IncompleteWindowError(EtUpscaleError, ValueError):
    def __init__(self, site_id, date, missing):
        self.site_id = site_id
        self.date = date
        self.missing = tuple(missing)
        super().__init__(
            f"incomplete window for {site_id} {date}: missing {', '.join(self.missing)}"
        )


class ConfigError(EtUpscaleError, ValueError):
    pass


class MalformedModelError(EtUpscaleError):
    pass


class ModelVersionError(MalformedModelError):
    pass


class InvalidKError(EtUpscaleError, ValueError):
    pass


class GridFormatError(EtUpscaleError):
    pass


class UnitError(EtUpscaleError, ValueError):
    pass


class DegenerateInputWarning(UserWarning):
    pass


class SuspiciousValueWarning(UserWarning):
    pass
