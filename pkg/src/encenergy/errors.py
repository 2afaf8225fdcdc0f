"""Exception hierarchy.

Every error carries a ``kind`` (the class name) so the CLI can print a
single ``kind: message`` line. The three intermediate classes map onto
CLI exit codes: configuration problems (2), exhausted probes (3) and
numerical failures (4).
"""


class EncEnergyError(Exception):
    @property
    def kind(self) -> str:
        return type(self).__name__


class ConfigError(EncEnergyError, ValueError):
    """Invalid user input: configs, files, arguments."""


class NumericalError(EncEnergyError, ArithmeticError):
    """A computation could not produce a finite, well-defined result."""


# feature-core
class QpOutOfRange(ConfigError):
    def __init__(self, standard, qp, lo, hi):
        self.standard, self.qp, self.lo, self.hi = standard, qp, lo, hi
        super().__init__(f"qp={qp} outside [{lo}, {hi}] for {standard}")


class NonPositiveDimension(ConfigError):
    pass


class NonPositiveFrameCount(ConfigError):
    pass


class ParseError(ConfigError):
    def __init__(self, line: int, column: str, reason: str):
        self.line, self.column, self.reason = line, column, reason
        super().__init__(f"line {line}, column {column!r}: {reason}")


class InvariantViolation(ConfigError):
    def __init__(self, sample_index: int, reason: str):
        self.sample_index, self.reason = sample_index, reason
        super().__init__(f"sample {sample_index}: {reason}")


# gpr-engine / lr-baseline
class NonFiniteInput(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class RankDeficientBasis(NumericalError):
    pass


class OptimizationDiverged(NumericalError):
    pass


class TooFewSamples(ConfigError):
    pass


class ModelFormatError(ConfigError):
    pass


# measurement
class ProbeExhausted(EncEnergyError):
    pass


class WindowOutOfRange(ConfigError):
    pass


class DegenerateTrace(ConfigError):
    pass


class InvalidProbability(ConfigError):
    pass


class TooFewValues(ConfigError):
    pass


class NonPositiveMean(NumericalError):
    pass


# evaluation
class LengthMismatch(ConfigError):
    pass


class NonPositiveTrueValue(ConfigError):
    pass


class InvalidK(ConfigError):
    pass


class UnknownSampleId(ConfigError):
    pass


class FoldError(EncEnergyError):
    """A fit failed inside one cross-validation fold."""

    def __init__(self, fold: int, cause: Exception):
        self.fold, self.cause = fold, cause
        super().__init__(f"fold {fold}: {getattr(cause, 'kind', type(cause).__name__)}: {cause}")
