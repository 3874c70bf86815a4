"""Exception hierarchy. Every error carries the CLI exit code for its class."""


class BlendError(Exception):
    exit_code = 10


class MissingColumn(BlendError):
    exit_code = 11


class BadProbability(BlendError):
    exit_code = 12


class DuplicateId(BlendError):
    exit_code = 13


class EmptySample(BlendError):
    exit_code = 14


class MissingAuxiliary(BlendError):
    """A row lacks an auxiliary value; blending needs complete x."""

    exit_code = 15


class UnknownVariable(BlendError):
    exit_code = 16


class RankDeficient(BlendError):
    exit_code = 20


class AllSameClass(BlendError):
    exit_code = 21


class GammaAtOne(BlendError):
    exit_code = 22


class ZeroConvenienceProb(BlendError):
    exit_code = 23


class RakingNonconvergence(BlendError):
    exit_code = 30


class WrongScheme(BlendError):
    exit_code = 31


class DegenerateVariance(BlendError):
    exit_code = 32


class NotEnoughUnits(BlendError):
    exit_code = 33


class TooFewUnits(BlendError):
    exit_code = 34


class ReplicateFailure(BlendError):
    exit_code = 35

    def __init__(self, group: int, cause: Exception):
        self.group = group
        self.cause = cause
        super().__init__(f"replicate with group {group} deleted failed: {cause}")


class BadSpec(BlendError):
    exit_code = 40


class SeparationWarning(UserWarning):
    """Quasi-complete separation detected in a logistic fit."""
