"""Exception types shared across the package.

Everything that indicates malformed caller input subclasses
InvalidInputError so command-line entry points can map the whole
family onto a single exit code.
"""


class InvalidInputError(ValueError):
    """Caller-supplied data is malformed or out of range."""


class OutOfBoundsError(InvalidInputError):
    """A point lies outside the floorplan rectangle."""


class DataMismatchError(ValueError):
    """Inputs that must describe the same scenario disagree.

    Raised when observation logs reference beacons absent from the
    layout, when trajectory and packet-log time ranges cannot be
    reconciled, and similar cross-file inconsistencies.
    """


class InsufficientDataError(ValueError):
    """Not enough observations to evaluate the requested quantity."""


class InsufficientGeometryError(ValueError):
    """Too few beacons (or triangles) to constrain the estimate."""


class SaturationError(FloatingPointError):
    """A truncated-normal correction underflowed to an exact zero tail."""


class SingularDistanceError(ValueError):
    """A propagation model was evaluated at zero transmitter distance."""


class GaugeError(ValueError):
    """Training data leaves the coordinate frame unidentifiable.

    With no known beacon positions and no labeled receiver locations the
    posterior is invariant under rigid motions of the floorplan, so the
    sampler would wander a flat manifold instead of converging.
    """


class InitializationError(RuntimeError):
    """Could not find a finite-density starting point for the sampler."""
