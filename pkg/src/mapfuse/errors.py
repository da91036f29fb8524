"""Exception hierarchy shared by the pipeline.

Three failure classes map onto distinct CLI exit codes: input parsing,
violated preconditions, and numerical divergence.
"""


class MapfuseError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ParseError(MapfuseError):
    """Malformed or missing input data."""

    exit_code = 2


class PreconditionError(MapfuseError):
    """An operation was called outside its contract."""

    exit_code = 3


class NumericalError(MapfuseError):
    """An iterative solver failed to make progress."""

    exit_code = 4


# --- precondition family ---------------------------------------------------

class TooFewPoints(PreconditionError):
    pass


class NonFiniteInput(PreconditionError):
    pass


class BadCutoff(PreconditionError):
    pass


class EmptyProfile(PreconditionError):
    pass


class BandTooNarrow(PreconditionError):
    pass


class NoOverlap(PreconditionError):
    pass


class OutOfRange(PreconditionError):
    pass


class NotConnected(PreconditionError):
    pass


class DegenerateGeometry(PreconditionError):
    pass


class EmptyAfterGroundFilter(PreconditionError):
    pass


class NoValidPoints(PreconditionError):
    pass


class EmptyNeighborhood(PreconditionError):
    pass


class InvalidRoute(PreconditionError):
    pass


class ConfigError(ParseError):
    pass


# --- numerical family ------------------------------------------------------

class SingularInnovation(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class RegistrationFailed(NumericalError):
    pass


class NoConsensus(NumericalError):
    pass
