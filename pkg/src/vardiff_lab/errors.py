"""Exception hierarchy shared by all modules."""


class VardiffError(Exception):
    """Base class for all errors raised by vardiff_lab."""


class DegenerateGrid(VardiffError):
    pass


class DegenerateJacobian(VardiffError):
    pass


class DegenerateRegion(VardiffError):
    pass


class NonMonotoneMap(VardiffError):
    pass


class NonTransversalDeformation(VardiffError):
    """Raised when a deformation is tangent to the planar projection of a curve."""

    def __init__(self, message, index=None, slice_index=None):
        super().__init__(message)
        self.index = index
        self.slice_index = slice_index


class NewtonDiverged(VardiffError):
    pass


class StepTooSmall(VardiffError):
    pass


class LightlikePoint(VardiffError):
    def __init__(self, message, site=None, step=None):
        super().__init__(message)
        self.site = site
        self.step = step


class EliminationDiverged(VardiffError):
    pass


class StepRejected(VardiffError):
    pass


class NonQuadraticPotential(VardiffError):
    pass


class ConfigError(VardiffError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
