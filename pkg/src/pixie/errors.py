class PixieError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(PixieError, ValueError):
    pass


class FormatError(PixieError, ValueError):
    pass


class LengthError(PixieError, ValueError):
    pass


class ConfigError(PixieError, ValueError):
    pass


class UnsupportedError(PixieError, ValueError):
    pass
