"""Correlation-driven input-channel selection.

The forecasters read yesterday to predict the next half hour, so the
useful question is: which of a building's signals, seen over one day,
carry information about the next day of the target vector? The kernel
operation is a block Pearson correlation: chop both series into aligned
48-sample (one-day) blocks, correlate per block, average. Blocks where
either side has zero variance are skipped; if everything was skipped the
result is the NaN marker.

Channel selection keeps the target's own history always, and adds another
vector only when the building physically couples the two networks AND the
lagged correlation clears a threshold (default 0.3). Weather channels are
opt-in via flags and face the same threshold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import (
    SAMPLES_PER_DAY,
    BuildingMeta,
    EnergyVector,
    MultiEnergyDataset,
    VECTOR_ORDER,
)
from .errors import LengthMismatchError, UndefinedCorrelationError

TEMPERATURE_CHANNEL = "temperature"
SOLAR_CHANNEL = "solar"


def sliding_mean_correlation(x: np.ndarray, y: np.ndarray,
                             window: int = SAMPLES_PER_DAY,
                             step: int = SAMPLES_PER_DAY) -> float:
    """Mean Pearson correlation over aligned sliding blocks.

    Blocks start at 0, step, 2*step, ... and must fit entirely; a block
    where either side has zero variance is skipped. Returns NaN when every
    block was skipped.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise LengthMismatchError(f"series lengths differ: {x.shape[0]} vs {y.shape[0]}")
    if window < 2 or step < 1:
        raise ValueError("window must be >= 2 and step >= 1")
    total = 0.0
    count = 0
    for start in range(0, x.shape[0] - window + 1, step):
        bx = x[start:start + window]
        by = y[start:start + window]
        dx = bx - bx.mean()
        dy = by - by.mean()
        sx = float(dx @ dx)
        sy = float(dy @ dy)
        if sx == 0.0 or sy == 0.0:
            continue
        total += float(dx @ dy) / math.sqrt(sx * sy)
        count += 1
    return total / count if count else math.nan


@dataclass(frozen=True)
class CorrTable:
    """Labelled correlation matrix; NaN cells mark undefined entries."""

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    values: np.ndarray

    def get(self, row: str, col: str) -> float:
        return float(self.values[self.rows.index(row), self.cols.index(col)])

    def to_csv(self, path) -> None:
        """Long format: row,col,value (NaN written as 'nan')."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("row", "col", "value"))
            for i, r in enumerate(self.rows):
                for j, c in enumerate(self.cols):
                    v = self.values[i, j]
                    w.writerow((r, c, "nan" if math.isnan(v) else repr(float(v))))


def _prev_label(name: str) -> str:
    return f"{name}_prev24h"


def _candidate_signals(ds: MultiEnergyDataset, building: int) -> list[tuple[str, np.ndarray]]:
    signals = [(_prev_label(v.value), ds.get_series(building, v)) for v in VECTOR_ORDER]
    if ds.temperature is not None:
        signals.append((_prev_label(TEMPERATURE_CHANNEL), ds.temperature))
    if ds.solar is not None:
        signals.append((_prev_label(SOLAR_CHANNEL), ds.solar))
    return signals


def next_prev_correlation_matrix(ds: MultiEnergyDataset,
                                 target_vector: EnergyVector,
                                 days: int | None = None) -> CorrTable:
    """Per building: correlation of each candidate signal's previous day
    with the next day of the target vector.

    Rows are candidate signals (own vectors, then weather when present),
    columns are buildings. Cells are NaN where a series is all-zero.
    """
    target_vector = EnergyVector(target_vector)
    hi = ds.num_samples if days is None else days * SAMPLES_PER_DAY
    lag = SAMPLES_PER_DAY
    row_names = [name for name, _ in _candidate_signals(ds, 0)]
    cols = tuple(f"building_{b}" for b in range(ds.num_buildings))
    values = np.full((len(row_names), ds.num_buildings), math.nan)
    for b in range(ds.num_buildings):
        target = ds.get_series(b, target_vector)[:hi]
        for i, (_, signal) in enumerate(_candidate_signals(ds, b)):
            values[i, b] = sliding_mean_correlation(signal[:hi][:-lag], target[lag:])
    return CorrTable(tuple(row_names), cols, values)


def cross_vector_table(ds: MultiEnergyDataset, building: int,
                       days: int | None = None) -> CorrTable:
    """3x3 previous-day vector vs next-day vector table for one building."""
    hi = ds.num_samples if days is None else days * SAMPLES_PER_DAY
    lag = SAMPLES_PER_DAY
    rows = tuple(_prev_label(v.value) for v in VECTOR_ORDER)
    cols = tuple(f"{v.value}_next24h" for v in VECTOR_ORDER)
    values = np.full((3, 3), math.nan)
    for i, vp in enumerate(VECTOR_ORDER):
        prev = ds.get_series(building, vp)[:hi]
        for j, vn in enumerate(VECTOR_ORDER):
            nxt = ds.get_series(building, vn)[:hi]
            values[i, j] = sliding_mean_correlation(prev[:-lag], nxt[lag:])
    return CorrTable(rows, cols, values)


def cross_building_correlation(ds: MultiEnergyDataset, vector: EnergyVector,
                               days: int | None = None) -> CorrTable:
    """Same-time block correlation between every pair of non-zero buildings
    for one vector. Symmetric with a unit diagonal."""
    vector = EnergyVector(vector)
    hi = ds.num_samples if days is None else days * SAMPLES_PER_DAY
    buildings = ds.nonzero_buildings(vector)
    labels = tuple(f"building_{b}" for b in buildings)
    n = len(buildings)
    values = np.full((n, n), math.nan)
    series = [ds.get_series(b, vector)[:hi] for b in buildings]
    for i in range(n):
        values[i, i] = sliding_mean_correlation(series[i], series[i])
        for j in range(i + 1, n):
            r = sliding_mean_correlation(series[i], series[j])
            values[i, j] = values[j, i] = r
    return CorrTable(labels, labels, values)


def select_input_channels(corr: CorrTable, building: int,
                          target_vector: EnergyVector, meta: BuildingMeta,
                          threshold: float = 0.3,
                          add_temperature: bool = False,
                          add_solar: bool = False) -> list[str]:
    """Pick the input channel list for one building and target vector.

    `corr` is the next_prev_correlation_matrix for the target vector. The
    target's own history is always first; another vector joins only when
    the building couples it with the target AND its lagged correlation is
    >= threshold. Weather channels join under their flags when |r| clears
    the same threshold (temperature drives heat demand with a negative
    sign, which is just as informative). Raises UndefinedCorrelationError
    when the target's own correlation cell is the NaN marker.
    """
    target_vector = EnergyVector(target_vector)
    col = f"building_{building}"
    own = corr.get(_prev_label(target_vector.value), col)
    if math.isnan(own):
        raise UndefinedCorrelationError(
            f"building {building} has no usable {target_vector.value} history")
    channels: list[str] = [target_vector.value]
    for v in VECTOR_ORDER:
        if v == target_vector:
            continue
        coupled = {v, target_vector} <= set(meta.coupled_vectors)
        if not coupled:
            continue
        r = corr.get(_prev_label(v.value), col)
        if not math.isnan(r) and r >= threshold:
            channels.append(v.value)
    for flag, name in ((add_temperature, TEMPERATURE_CHANNEL), (add_solar, SOLAR_CHANNEL)):
        if not flag:
            continue
        label = _prev_label(name)
        if label not in corr.rows:
            continue
        r = corr.get(label, col)
        if not math.isnan(r) and abs(r) >= threshold:
            channels.append(name)
    return channels
