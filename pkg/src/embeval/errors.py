"""Exception types shared across the package.

Every recoverable failure mode raises a distinct subclass of
:class:`EvalError` so callers (notably the CLI) can map failures to
diagnostics without string matching.
"""


class EvalError(Exception):
    """Base class for all toolkit errors."""


# embeddings
class ZeroVectorError(EvalError):
    """A row had (near-)zero Euclidean norm and cannot be normalized."""


class LayerOutOfRangeError(EvalError):
    """Requested layer index exceeds the stack depth."""


class InadmissibleExponentError(EvalError):
    """Power-mean exponent outside the admissible set."""


class MissingSentenceError(EvalError):
    """Provider has no record for the requested sentence id."""


class ProviderUnavailableError(EvalError):
    """Remote provider failed after all retries."""


class DimensionMismatchError(EvalError):
    """Vectors, matrices, or token sequences disagree on shape."""


class NotNormalizedError(EvalError):
    """Operation requires row-normalized embeddings."""


# idf
class EmptyCorpusError(EvalError):
    """idf construction needs at least one sentence."""


# scorer
class EmptySentenceError(EvalError):
    """A sentence has no tokens before filtering."""


class EmptyAfterFilterError(EvalError):
    """The filter policy removed every token on one side."""


class AlreadyRescaledError(EvalError):
    """Rescaling a triple that is already rescaled."""


class InvalidBaselineError(EvalError):
    """A rescale baseline component is >= 1."""


class PoolTooSmallError(EvalError):
    """Baseline estimation needs at least two pool sentences."""


# transport
class EmptyMatrixError(EvalError):
    """Assignment on an empty similarity matrix."""


class InfeasibleMassesError(EvalError):
    """Transport marginals do not form matching distributions."""


class TooShortForOrderError(EvalError):
    """Sentence shorter than the requested n-gram order."""


# ngram
class EmptyBagError(EvalError):
    """Exact-match precision/recall on an empty n-gram bag."""


# stats
class ZeroVarianceError(EvalError):
    """Pearson correlation of a constant vector."""


class AllTiedError(EvalError):
    """Kendall tau denominator is zero (everything tied)."""


class DegenerateInputError(EvalError):
    """Williams test input outside its domain (n < 4 or K <= 0)."""


class OneClassOnlyError(EvalError):
    """ROC AUC needs at least one positive and one negative label."""


# harness
class UnknownSystemError(EvalError):
    """Dataset has no system by that name."""


class MissingJudgmentsError(EvalError):
    """Dataset lacks human judgments for required (system, id) pairs."""


class SampleTooLargeError(EvalError):
    """Model-selection sample size exceeds the hybrid count."""


class IncompleteStacksError(EvalError):
    """Layer sweep is missing embedding stacks or layers."""


class DatasetFormatError(EvalError):
    """Malformed input file (TSV/JSONL) at ingestion time."""
