"""Exception hierarchy shared across the toolkit.

Every data-level failure raises a subclass of :class:`EvacsimError` so the
CLI can map them to a single exit code.
"""


class EvacsimError(Exception):
    """Base class for all toolkit errors."""


class InfeasibleParams(EvacsimError):
    """Geometry parameters violate a floorplan constraint."""


class InvalidScenario(EvacsimError):
    """Scenario fields violate an invariant (empty origins, bad counts, ...)."""


class SiteTooLarge(EvacsimError):
    """Floorplan exceeds the 64 x 64 m canvas."""


class OutOfBounds(EvacsimError):
    """Point outside the site or canvas."""


class NoDestination(EvacsimError):
    """Navigation field requested without destination areas."""


class DisconnectedSpace(EvacsimError):
    """Some origin cannot reach any destination."""


class PlacementFailure(EvacsimError):
    """Agent placement exceeded the rejection budget."""


class SimulationTimeout(EvacsimError):
    """Simulated time exceeded the hard cap; layout is blocked or agents are stuck."""


class OutOfRange(EvacsimError):
    """Query time outside the simulated interval."""


class NonPositiveTET(EvacsimError):
    """Evacuation time must be strictly positive."""


class NegativeRate(EvacsimError):
    """Density rates cannot be negative."""


class NegativeWeights(EvacsimError):
    """Tversky weights must be non-negative."""


class ShapeMismatch(EvacsimError):
    """Prediction and ground-truth arrays disagree in shape."""


class EmptyList(EvacsimError):
    """Metric requested on an empty collection."""


class NonPositiveTruth(EvacsimError):
    """Relative error needs strictly positive ground-truth times."""


class TooFewSamples(EvacsimError):
    """Not enough samples to split."""


class FormatError(EvacsimError):
    """A persisted artifact does not parse under its declared schema."""
