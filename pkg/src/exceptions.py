"""
Error hierarchy for the DISCO toolkit

Every error carries an exit code so main.py can map failures to the
documented CLI exit codes.
"""


class DiscoError(Exception):
    """Base class for all toolkit errors"""
    exit_code = 1


class ConfigurationError(DiscoError, ValueError):
    """Invalid parameter, config document or environment value"""
    exit_code = 2


class DimensionError(DiscoError, ValueError):
    """Operands with non-conforming shapes"""
    exit_code = 2


class InputError(DiscoError, ValueError):
    """Malformed input data (non-finite values, missing attributes, bad labels)"""
    exit_code = 2


class ContractError(DiscoError, ValueError):
    """Caller violated an operation precondition"""
    exit_code = 2


class EstimatorUndefinedError(DiscoError, ValueError):
    """Estimator cannot be evaluated on the given batch"""
    exit_code = 2


class CapacityError(DiscoError):
    """Enumeration or allocation would exceed the supported size"""
    exit_code = 4


class NumericDomainError(DiscoError, ArithmeticError):
    """Value outside the domain of a numeric operation"""
    exit_code = 5


class UndefinedConditionalError(NumericDomainError):
    """Conditioning on an event of zero probability"""
    exit_code = 5


class CapabilityError(DiscoError):
    """Requested feature not supported by the chosen family"""
    exit_code = 6
