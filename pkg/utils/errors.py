"""Exception hierarchy shared by every package; exit codes follow the CLI contract."""


class FradError(Exception):
    """Base class for all errors raised by frad-desk."""

    exit_code = 1


class ConfigError(FradError):
    exit_code = 2


class DataError(FradError):
    exit_code = 3


class NumericalError(FradError):
    exit_code = 4


class PreconditionError(ConfigError, ValueError):
    """A documented precondition of an operation does not hold."""


# Data errors
class ParseError(DataError):
    """Malformed XYZ, MOL or manifest text."""


class TopologyError(DataError):
    """Invalid bond graph (self bond, duplicate, out of range, disconnected)."""


class RingBondError(TopologyError):
    """The bond lies on a cycle, so removing it does not split the molecule."""


# Numerical errors
class DegenerateGeometryError(NumericalError):
    """A collinear hinge or zero-length axis makes an internal coordinate undefined."""

    def __init__(self, message: str, atoms: tuple = ()):
        super().__init__(message)
        self.atoms = tuple(atoms)


class PerturbationError(NumericalError):
    """Noise application aborted; the partially perturbed state was discarded."""


class UndefinedRatioError(NumericalError):
    pass


class UndefinedCorrelationError(NumericalError):
    pass


class CoincidentAtomsError(NumericalError):
    def __init__(self, i: int, j: int):
        super().__init__(f"Atoms {i} and {j} are at zero distance; direction r_ij is undefined")
        self.pair = (i, j)


class NonFiniteLossError(NumericalError):
    def __init__(self, sample_id, value: float):
        super().__init__(f"Non-finite loss {value} for sample {sample_id}")
        self.sample_id = sample_id
        self.trace: list = []


class StageError(FradError):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def with_context(exc: Exception, context: str) -> Exception:
    """Prefix the message of ``exc`` in place; the exception type and attributes are kept."""
    if exc.args:
        exc.args = (f"{context}: {exc.args[0]}",) + tuple(exc.args[1:])
    else:
        exc.args = (context,)
    return exc
