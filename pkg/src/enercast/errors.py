"""Exception types raised across the package.

Every error a caller is expected to handle has its own class so that tests
and calling code can catch precisely, not by message matching.
"""

from __future__ import annotations


class EnercastError(Exception):
    """Base class for every error raised by this package."""


# --- tensor / layer kernel ---------------------------------------------------


class EmptyTensorError(EnercastError):
    """A tensor dimension is zero or negative where data is required."""


class ChannelMismatchError(EnercastError):
    """Kernel input-channel count does not match the incoming tensor."""


class DimMismatchError(EnercastError):
    """Per-channel parameter vector length does not match the channel axis."""


class PoolLargerThanInputError(EnercastError):
    """Pooling window exceeds the spatial extent of the input."""


class LengthMismatchError(EnercastError):
    """Two vectors that must align elementwise have different lengths."""


class ShapeMismatchError(EnercastError):
    """A layer received an input of the wrong shape.

    Carries the index of the offending layer so a 15-layer stack failure
    points at the layer, not just at the stack.
    """

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {message}")


class StaleCacheError(EnercastError):
    """backward() was handed a cache from a different network or mode."""


# --- optimizer / training ----------------------------------------------------


class BatchLargerThanDatasetError(EnercastError):
    """Mini-batch size exceeds the number of training samples."""


class NonFiniteLossError(EnercastError):
    """Training hit a NaN/Inf loss; model was rolled back to last-good params."""

    def __init__(self, epoch: int, iteration: int):
        self.epoch = epoch
        self.iteration = iteration
        super().__init__(
            f"non-finite loss at epoch {epoch}, iteration {iteration}; "
            "parameters rolled back to the last finite step"
        )


# --- architectures -----------------------------------------------------------


class BadChannelCountError(EnercastError):
    """A multi-channel network builder got an unsupported channel count."""


class ShapeUnderflowError(EnercastError):
    """Symbolic shape inference produced a non-positive dimension.

    Carries the index of the first offending layer.
    """

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {message}")


# --- data --------------------------------------------------------------------


class CsvParseError(EnercastError):
    """A CSV row failed validation; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RaggedSeriesError(EnercastError):
    """Buildings in one dataset have different series lengths or gaps."""


class NegativeValueError(EnercastError):
    """A consumption value is negative."""


class SeriesTooShortError(EnercastError):
    """Series too short to cut a single input window plus target."""


class InsufficientDataError(EnercastError):
    """Too few whole days to honour the requested split."""


class ChannelUnavailableError(EnercastError):
    """A requested input channel is all-zero or absent for this building."""


# --- feature selection -------------------------------------------------------


class UndefinedCorrelationError(EnercastError):
    """Every correlation block was degenerate; no value can be reported."""


# --- metrics -----------------------------------------------------------------


class NonPositiveMaxError(EnercastError):
    """Peak of the actuals is <= 0, so peak-normalised error is undefined."""


class RaggedInputError(EnercastError):
    """Per-building prediction rows have unequal lengths."""


# --- federated ---------------------------------------------------------------


class EmptyNodeListError(EnercastError):
    """Weight averaging requires at least one node."""


# --- experiment / cli --------------------------------------------------------


class ConfigError(EnercastError):
    """A config file or flag value is malformed or inconsistent."""


class MissingResultsError(EnercastError):
    """Plot-data emission was asked for results that were never produced."""
