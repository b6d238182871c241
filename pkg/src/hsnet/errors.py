class HSNetError(Exception):
    pass


class DimensionError(HSNetError, ValueError):
    pass


class ShapeError(HSNetError, ValueError):
    pass


class ParameterError(HSNetError, ValueError):
    pass


class ConfigError(HSNetError, ValueError):
    pass


class NumericError(HSNetError, ArithmeticError):
    pass
