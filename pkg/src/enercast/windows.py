"""Sliding-window supervision, chronological splits and input assembly.

Every forecast sample is a stride-1 window: 48 consecutive half-hour
samples in, the value one step past the window out. A series of length T
yields T−48 windows. Windows are assigned to a train/validation/test
partition by the day their TARGET falls in, so a test partition of d days
contributes exactly d*48 windows (inputs may reach back across the
boundary; targets never do, which is what leakage is about).

`assemble_input` builds the (window, width, channel) input layout for each
forecaster kind from a dataset, with optional exogenous weather columns
and optional 0-1 min-max scaling fitted on the training sample range only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .arch import FrameworkId
from .data import (
    SAMPLES_PER_DAY,
    EnergyVector,
    MultiEnergyDataset,
    vector_index,
)
from .errors import (
    ChannelUnavailableError,
    InsufficientDataError,
    SeriesTooShortError,
)
from .tensor import Tensor4

WINDOW = 48


@dataclass
class WindowSet:
    """Supervised windows: inputs (window, W, C, N), targets (N, K), and the
    global sample index of each window's target."""

    inputs: Tensor4
    targets: np.ndarray
    target_index: np.ndarray

    @property
    def count(self) -> int:
        return self.inputs.batch

    def subset(self, mask: np.ndarray) -> "WindowSet":
        return WindowSet(
            Tensor4(self.inputs.data[:, :, :, mask]),
            self.targets[mask],
            self.target_index[mask],
        )


def make_windows(input_series: np.ndarray, target_series: np.ndarray,
                 window: int = WINDOW, horizon: int = 1,
                 index_offset: int = 0) -> WindowSet:
    """Cut stride-1 windows: inputs[i] = series[i : i+window], target the
    value `horizon` steps past the window end.

    input_series is (T,), (T, W) or (T, W, C); target_series is (T,) or
    (T, K). index_offset shifts the recorded target indices when the series
    is itself a slice of a longer one.
    """
    x = np.asarray(input_series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None, None]
    elif x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ValueError(f"input series must have 1-3 dims, got {x.ndim}")
    y = np.asarray(target_series, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    t = x.shape[0]
    if y.shape[0] != t:
        raise ValueError(f"target length {y.shape[0]} != input length {t}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    n = t - window - horizon + 1
    if n < 1:
        raise SeriesTooShortError(
            f"need at least {window + horizon} samples, got {t}")
    # (n + horizon - 1, W, C, window) view over the time axis, then the
    # first n windows become the batch
    view = sliding_window_view(x, window, axis=0)
    inputs = view[:n].transpose(3, 1, 2, 0).copy()
    target_pos = np.arange(n) + window + horizon - 1
    return WindowSet(
        Tensor4(inputs),
        y[target_pos].copy(),
        target_pos + index_offset,
    )


# --- chronological splits ---------------------------------------------------


class SplitMode(str, enum.Enum):
    TRAIN_TEST = "train_test"              # 66 / 33 by days
    TRAIN_VAL_TEST = "train_val_test"      # 60 / 10 / 30 by days


@dataclass(frozen=True)
class SplitSpec:
    mode: SplitMode = SplitMode.TRAIN_TEST
    # Put the boundary at the first day of the last calendar month instead
    # of a fixed fraction (e.g. two months train, third month test).
    calendar_months: bool = False


@dataclass
class PartitionedWindows:
    train: WindowSet
    validation: WindowSet | None
    test: WindowSet


@dataclass(frozen=True)
class SplitBounds:
    """Half-open day ranges per partition, in chronological order."""

    train: tuple[int, int]
    validation: tuple[int, int] | None
    test: tuple[int, int]

    def sample_range(self, days: tuple[int, int]) -> tuple[int, int]:
        return days[0] * SAMPLES_PER_DAY, days[1] * SAMPLES_PER_DAY

    def apply(self, ws: WindowSet) -> PartitionedWindows:
        """Partition windows by the day of their target sample."""

        def pick(days: tuple[int, int]) -> WindowSet:
            lo, hi = self.sample_range(days)
            mask = (ws.target_index >= lo) & (ws.target_index < hi)
            return ws.subset(mask)

        return PartitionedWindows(
            train=pick(self.train),
            validation=None if self.validation is None else pick(self.validation),
            test=pick(self.test),
        )


def split(ds: MultiEnergyDataset, spec: SplitSpec) -> SplitBounds:
    """Compute chronological split boundaries in whole days.

    train_test: 66% of days train (rounded), rest test. train_val_test:
    60% train, 10% validation, rest test. With calendar_months the test
    partition is instead the last calendar month in the dataset.
    """
    days = ds.num_days
    if spec.calendar_months:
        test_days = _last_month_days(ds)
        if test_days >= days:
            raise InsufficientDataError(
                "calendar split needs at least one month before the last")
        boundary = days - test_days
        if spec.mode is SplitMode.TRAIN_TEST:
            bounds = SplitBounds((0, boundary), None, (boundary, days))
        else:
            val_days = max(1, round(days * 0.1))
            if val_days >= boundary:
                raise InsufficientDataError("not enough days before the test month")
            bounds = SplitBounds((0, boundary - val_days),
                                 (boundary - val_days, boundary),
                                 (boundary, days))
    elif spec.mode is SplitMode.TRAIN_TEST:
        train_days = round(days * 0.66)
        bounds = SplitBounds((0, train_days), None, (train_days, days))
    else:
        train_days = round(days * 0.6)
        val_days = round(days * 0.1)
        bounds = SplitBounds((0, train_days),
                             (train_days, train_days + val_days),
                             (train_days + val_days, days))
    _check_bounds(bounds)
    return bounds


def _check_bounds(bounds: SplitBounds) -> None:
    spans = [bounds.train, bounds.test]
    if bounds.validation is not None:
        spans.insert(1, bounds.validation)
    for lo, hi in spans:
        if hi - lo < 1:
            raise InsufficientDataError(f"empty partition [{lo}, {hi})")
    # training needs at least one window: 2 days (day 0 never holds targets)
    if bounds.train[1] - bounds.train[0] < 2:
        raise InsufficientDataError("training partition needs at least 2 days")


def _last_month_days(ds: MultiEnergyDataset) -> int:
    stamps = ds.timestamps()
    last = stamps[-1]
    days = 0
    for i in range(ds.num_days):
        day_start = stamps[i * SAMPLES_PER_DAY]
        if (day_start.year, day_start.month) == (last.year, last.month):
            days += 1
    return days


# --- input assembly ----------------------------------------------------------


def _require_series(ds: MultiEnergyDataset, building: int,
                    vector: EnergyVector) -> np.ndarray:
    if ds.is_zero(building, vector):
        raise ChannelUnavailableError(
            f"building {building} has no {EnergyVector(vector).value} consumption")
    return ds.get_series(building, vector)


def _weather_columns(ds: MultiEnergyDataset, add_temperature: bool,
                     add_solar: bool) -> list[np.ndarray]:
    cols = []
    if add_temperature:
        if ds.temperature is None:
            raise ChannelUnavailableError("dataset has no temperature series")
        cols.append(ds.temperature)
    if add_solar:
        if ds.solar is None:
            raise ChannelUnavailableError("dataset has no solar series")
        cols.append(ds.solar)
    return cols


def minmax_scale_inputs(matrix: np.ndarray, train_samples: tuple[int, int]) -> np.ndarray:
    """Scale each input column to [0, 1] using min/max over the training
    sample range only. A constant column maps to all zeros."""
    lo, hi = train_samples
    flat = matrix.reshape(matrix.shape[0], -1)
    mn = flat[lo:hi].min(axis=0)
    span = flat[lo:hi].max(axis=0) - mn
    span[span == 0.0] = 1.0
    return ((flat - mn) / span).reshape(matrix.shape)


def assemble_input(ds: MultiEnergyDataset, framework: FrameworkId,
                   target_vector: EnergyVector, building: int | None = None,
                   channels: list[EnergyVector] | None = None,
                   add_temperature: bool = False, add_solar: bool = False,
                   minmax: bool = False,
                   train_samples: tuple[int, int] | None = None) -> WindowSet:
    """Build the full-range WindowSet a forecaster kind trains on.

    single / single_validated / fed_local: one building's target series in
    and out. multi_channel: 2-3 vectors of one building side by side (the
    target vector first), predicting the target vector. all_joint: every
    building and vector in and out (targets flattened building-major).
    per_vector: every building for one vector.

    Weather columns extend the width axis for single-building layouts and
    the channel axis (broadcast over buildings) for whole-network layouts.
    With minmax=True, inputs are scaled to [0, 1] per column with min/max
    fitted on `train_samples` (a half-open sample range).
    """
    framework = FrameworkId(framework)
    target_vector = EnergyVector(target_vector)
    t = ds.num_samples

    if framework in (FrameworkId.SINGLE, FrameworkId.SINGLE_VALIDATED,
                     FrameworkId.FED_LOCAL, FrameworkId.MULTI_CHANNEL):
        if building is None:
            raise ValueError(f"{framework.value} needs a building index")
        if framework is FrameworkId.MULTI_CHANNEL:
            if not channels:
                raise ValueError("multi_channel needs an ordered channel list")
            if EnergyVector(channels[0]) != target_vector:
                raise ValueError("first channel must be the target vector")
            cols = [_require_series(ds, building, v) for v in channels]
        else:
            cols = [_require_series(ds, building, target_vector)]
        cols += _weather_columns(ds, add_temperature, add_solar)
        matrix = np.stack(cols, axis=1)                       # (T, W)
        targets = ds.get_series(building, target_vector)      # (T,)
    elif framework in (FrameworkId.ALL_JOINT, FrameworkId.PER_VECTOR):
        if framework is FrameworkId.ALL_JOINT:
            block = ds.series.transpose(2, 0, 1)              # (T, B, 3)
        else:
            block = ds.series[:, vector_index(target_vector), :].T[:, :, None]
        matrix = block
        extra = _weather_columns(ds, add_temperature, add_solar)
        if extra:
            planes = [np.broadcast_to(e[:, None, None],
                                      (t, block.shape[1], 1)) for e in extra]
            matrix = np.concatenate([block] + planes, axis=2)
        targets = block.reshape(t, -1)                        # building-major
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown framework {framework}")

    if minmax:
        if train_samples is None:
            raise ValueError("minmax scaling needs the training sample range")
        matrix = minmax_scale_inputs(np.array(matrix, dtype=np.float64), train_samples)

    return make_windows(matrix, targets)
