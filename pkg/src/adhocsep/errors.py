"""Exception types raised across the package."""


class AdhocSepError(Exception):
    """Base class for all package errors."""


class InputTooShortError(AdhocSepError, ValueError):
    pass


class ShapeMismatchError(AdhocSepError, ValueError):
    pass


class ParamsMismatchError(AdhocSepError, ValueError):
    pass


class OutOfRangeError(AdhocSepError, ValueError):
    pass


class GeometryError(AdhocSepError, ValueError):
    """A position lies outside the room or violates a clearance."""


class SamplingError(AdhocSepError, RuntimeError):
    """Scenario constraints could not be met within the retry budget."""


class SilentInputError(AdhocSepError, ValueError):
    pass


class DegenerateFrequencyError(AdhocSepError, ValueError):
    """A frequency bin carries no mask mass, or a filter cannot be formed."""


class SelectionError(AdhocSepError, ValueError):
    pass
