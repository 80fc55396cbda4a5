"""Exception types shared across the package."""


class CastnetError(Exception):
    """Base class for all errors raised by castnet."""


class ShapeError(CastnetError, ValueError):
    """Operand shapes are incompatible for an operation."""


class NumericError(CastnetError, ArithmeticError):
    """A non-finite value showed up where a finite one is required."""


class ContractError(CastnetError, ValueError):
    """A caller violated a documented precondition."""


class SchemaError(CastnetError, ValueError):
    """An input file does not carry the columns its schema map promises."""


class ConfigError(CastnetError, ValueError):
    """A configuration is internally inconsistent."""


class FingerprintMismatch(CastnetError):
    """A checkpoint was built against a different panel than the one supplied."""
