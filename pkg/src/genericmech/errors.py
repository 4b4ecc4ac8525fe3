"""Typed errors raised across the package."""


class GenericMechError(Exception):
    """Base class for all errors raised by this package."""


class SingularTensor(GenericMechError):
    pass


class NonpositiveTemperature(GenericMechError):
    pass


class NonpositiveHeatCapacity(GenericMechError):
    pass


class RootFindFailure(GenericMechError):
    pass


class BadParameters(GenericMechError):
    pass


class GridMismatch(GenericMechError):
    pass


class DimensionMismatch(GenericMechError):
    pass


class DegenerateEntropySlope(GenericMechError):
    pass


class DegenerateEnergySlope(GenericMechError):
    pass


class Inadmissible(GenericMechError):
    """State left the admissible set (det F_e <= 0, temperature <= 0, ...)."""


class BlowUp(GenericMechError):
    pass


class ParseError(GenericMechError):
    pass


class ValidationError(GenericMechError):
    pass
