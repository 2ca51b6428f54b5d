"""Exception hierarchy. Every domain failure raises a subclass of FinxploreError."""


class FinxploreError(Exception):
    """Base class for all package errors."""


# -- data loading / alignment -------------------------------------------------

class MissingAssetError(FinxploreError):
    """A required per-asset CSV file is absent."""


class MalformedRowError(FinxploreError):
    """A CSV field could not be parsed; carries file and line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class EmptyIntersectionError(FinxploreError):
    """Assets share no common trading dates."""


class InvariantViolationError(FinxploreError):
    """Panel data violates an OHLCV invariant (e.g. high < low)."""


class TooShortError(FinxploreError):
    """Series shorter than the operation's minimum length."""


class EmptySliceError(FinxploreError):
    """A date range selects zero rows."""


# -- environment ---------------------------------------------------------------

class WarmupIncompleteError(FinxploreError):
    """Episode start precedes the first index where all features are defined."""


class NotOnSimplexError(FinxploreError):
    """Weight vector is not on the probability simplex."""


class EpisodeDoneError(FinxploreError):
    """step() called after the panel was exhausted."""


class InsufficientHistoryError(FinxploreError):
    """Not enough history for the requested statistic."""


class StatsNotFittedError(FinxploreError):
    """Normalization statistics used before fit()."""


# -- neural core ---------------------------------------------------------------

class DimensionMismatchError(FinxploreError):
    """Input or gradient shape incompatible with the network."""


class TapeMismatchError(FinxploreError):
    """backward() called with a tape from a different forward pass/network."""


class ShapeMismatchError(FinxploreError):
    """Checkpoint parameter shapes do not match the receiving network."""


# -- training ------------------------------------------------------------------

class NonFiniteLossError(FinxploreError):
    """Loss or gradients became NaN/inf; parameters were rolled back."""


class ReplayTooSmallError(FinxploreError):
    """Replay buffer holds fewer transitions than one batch."""


class EmptyRolloutError(FinxploreError):
    """Advantage computation requested on an empty rollout."""


# -- baselines / metrics ---------------------------------------------------------

class NotPSDError(FinxploreError):
    """Covariance matrix is not symmetric positive semidefinite."""


class ZeroDispersionError(FinxploreError):
    """Return series has zero dispersion; Sharpe is undefined."""


class EmptyCurveError(FinxploreError):
    """Equity curve has no points."""


# -- configuration / artifacts ---------------------------------------------------

class ConfigError(FinxploreError):
    """Run configuration failed schema validation; message names the field."""


class MissingArtifactsError(FinxploreError):
    """A report was requested over run directories with missing outputs."""
