"""Multi-energy consumption dataset: container, invariants and CSV I/O.

A dataset is a rectangular block of half-hourly consumption readings for a
set of buildings across three energy vectors (electric, heat, gas), plus
optional site-wide temperature and solar-radiance series. Series always
cover whole days (length a multiple of 48) and are never negative; a
building that does not consume a vector carries an all-zero series for it
and is skipped by training code.

CSV schema (one row per timestamp and building, 30-minute cadence,
ISO-8601 timestamps):

    timestamp,building_id,electric_kw,heat_kw,gas_kw[,temp_c,solar_wm2]
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .errors import (
    CsvParseError,
    NegativeValueError,
    RaggedSeriesError,
)

SAMPLES_PER_DAY = 48
STEP = timedelta(minutes=30)


class EnergyVector(str, enum.Enum):
    ELECTRIC = "electric"
    HEAT = "heat"
    GAS = "gas"


VECTOR_ORDER: tuple[EnergyVector, ...] = (
    EnergyVector.ELECTRIC, EnergyVector.HEAT, EnergyVector.GAS)

_CSV_BASE_COLUMNS = ("timestamp", "building_id", "electric_kw", "heat_kw", "gas_kw")
_CSV_WEATHER_COLUMNS = _CSV_BASE_COLUMNS + ("temp_c", "solar_wm2")


def vector_index(vector: EnergyVector) -> int:
    return VECTOR_ORDER.index(EnergyVector(vector))


@dataclass(frozen=True)
class BuildingMeta:
    """Static per-building facts: distribution-node ids per network (None
    when the building is not connected) and which vectors are physically
    coupled at the building (conversion equipment linking networks)."""

    electric_node: int | None = None
    heat_node: int | None = None
    gas_node: int | None = None
    coupled_vectors: frozenset = frozenset()


class MultiEnergyDataset:
    """Validated half-hourly consumption block.

    series has shape (num_buildings, 3, T) with the vector axis ordered
    (electric, heat, gas); temperature (deg C) and solar (W/m2) are
    site-wide length-T series or None.
    """

    def __init__(self, start: datetime, series: np.ndarray,
                 temperature: np.ndarray | None = None,
                 solar: np.ndarray | None = None,
                 meta: tuple[BuildingMeta, ...] | None = None):
        series = np.asarray(series, dtype=np.float64)
        if series.ndim != 3 or series.shape[1] != 3:
            raise ValueError(f"series must be (buildings, 3, T), got {series.shape}")
        t = series.shape[2]
        if t < 1 or t % SAMPLES_PER_DAY != 0:
            raise ValueError(f"series length {t} is not a positive whole-day count")
        if np.any(series < 0):
            raise NegativeValueError("consumption values must be >= 0")
        if not np.all(np.isfinite(series)):
            raise ValueError("consumption values must be finite")
        for name, extra in (("temperature", temperature), ("solar", solar)):
            if extra is not None:
                extra = np.asarray(extra, dtype=np.float64)
                if extra.shape != (t,):
                    raise RaggedSeriesError(
                        f"{name} series has shape {extra.shape}, expected ({t},)")
        if meta is None:
            meta = tuple(_infer_meta(series[b]) for b in range(series.shape[0]))
        if len(meta) != series.shape[0]:
            raise ValueError(f"{len(meta)} meta entries for {series.shape[0]} buildings")
        self.start = start
        self.series = series
        self.temperature = None if temperature is None else np.asarray(
            temperature, dtype=np.float64)
        self.solar = None if solar is None else np.asarray(solar, dtype=np.float64)
        self.meta = tuple(meta)

    # -- views ----------------------------------------------------------

    @property
    def num_buildings(self) -> int:
        return self.series.shape[0]

    @property
    def num_samples(self) -> int:
        return self.series.shape[2]

    @property
    def num_days(self) -> int:
        return self.num_samples // SAMPLES_PER_DAY

    def get_series(self, building: int, vector: EnergyVector) -> np.ndarray:
        return self.series[building, vector_index(vector)]

    def is_zero(self, building: int, vector: EnergyVector) -> bool:
        return not np.any(self.get_series(building, vector))

    def nonzero_buildings(self, vector: EnergyVector) -> list[int]:
        return [b for b in range(self.num_buildings) if not self.is_zero(b, vector)]

    def timestamps(self) -> list[datetime]:
        return [self.start + i * STEP for i in range(self.num_samples)]

    def slice_days(self, start_day: int, end_day: int) -> "MultiEnergyDataset":
        """Chronological sub-dataset covering [start_day, end_day)."""
        if not (0 <= start_day < end_day <= self.num_days):
            raise ValueError(f"bad day range [{start_day}, {end_day})")
        lo, hi = start_day * SAMPLES_PER_DAY, end_day * SAMPLES_PER_DAY
        return MultiEnergyDataset(
            self.start + start_day * SAMPLES_PER_DAY * STEP,
            self.series[:, :, lo:hi].copy(),
            None if self.temperature is None else self.temperature[lo:hi].copy(),
            None if self.solar is None else self.solar[lo:hi].copy(),
            self.meta,
        )


def _infer_meta(building_series: np.ndarray) -> BuildingMeta:
    """Fallback coupling guess for data without topology information:
    a building is treated as coupled across the vectors it actually
    consumes, provided there are at least two."""
    present = frozenset(
        v for i, v in enumerate(VECTOR_ORDER) if np.any(building_series[i]))
    return BuildingMeta(coupled_vectors=present if len(present) >= 2 else frozenset())


# --- CSV -------------------------------------------------------------------


def save_csv(ds: MultiEnergyDataset, path) -> None:
    """Write the dataset to the interchange CSV, weather columns included
    when the dataset has them. Floats use repr so a load round-trips."""
    weather = ds.temperature is not None and ds.solar is not None
    header = _CSV_WEATHER_COLUMNS if weather else _CSV_BASE_COLUMNS
    stamps = ds.timestamps()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t_idx, stamp in enumerate(stamps):
            iso = stamp.isoformat()
            for b in range(ds.num_buildings):
                row = [iso, b,
                       repr(float(ds.series[b, 0, t_idx])),
                       repr(float(ds.series[b, 1, t_idx])),
                       repr(float(ds.series[b, 2, t_idx]))]
                if weather:
                    row += [repr(float(ds.temperature[t_idx])),
                            repr(float(ds.solar[t_idx]))]
                w.writerow(row)


def load_csv(path, meta: tuple[BuildingMeta, ...] | None = None) -> MultiEnergyDataset:
    """Parse and validate the interchange CSV.

    Raises CsvParseError (with the 1-based line number) for malformed rows,
    NegativeValueError for negative consumption, RaggedSeriesError for
    buildings with missing rows or a broken 30-minute cadence.
    """
    rows: dict[int, dict[datetime, tuple]] = {}
    weather_by_stamp: dict[datetime, tuple[float, float]] = {}
    has_weather = False
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(1, "empty file") from None
        header = tuple(h.strip() for h in header)
        if header == _CSV_WEATHER_COLUMNS:
            has_weather = True
        elif header != _CSV_BASE_COLUMNS:
            raise CsvParseError(1, f"unexpected header {header}")
        want = len(header)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != want:
                raise CsvParseError(line_no, f"expected {want} fields, got {len(row)}")
            try:
                stamp = datetime.fromisoformat(row[0])
            except ValueError:
                raise CsvParseError(line_no, f"bad timestamp {row[0]!r}") from None
            try:
                b = int(row[1])
            except ValueError:
                raise CsvParseError(line_no, f"bad building_id {row[1]!r}") from None
            if b < 0:
                raise CsvParseError(line_no, f"building_id must be >= 0, got {b}")
            try:
                values = tuple(float(x) for x in row[2:5])
            except ValueError:
                raise CsvParseError(line_no, "bad consumption value") from None
            if any(v < 0 for v in values):
                raise NegativeValueError(f"line {line_no}: negative consumption")
            if any(not np.isfinite(v) for v in values):
                raise CsvParseError(line_no, "non-finite consumption value")
            per_building = rows.setdefault(b, {})
            if stamp in per_building:
                raise CsvParseError(line_no, f"duplicate row for building {b} at {row[0]}")
            per_building[stamp] = values
            if has_weather:
                try:
                    wx = (float(row[5]), float(row[6]))
                except ValueError:
                    raise CsvParseError(line_no, "bad weather value") from None
                seen = weather_by_stamp.get(stamp)
                if seen is not None and seen != wx:
                    raise CsvParseError(
                        line_no, f"conflicting weather values at {row[0]}")
                weather_by_stamp[stamp] = wx
    if not rows:
        raise CsvParseError(2, "no data rows")
    ids = sorted(rows)
    if ids != list(range(len(ids))):
        raise CsvParseError(2, f"building ids must be dense 0..{len(ids) - 1}, got {ids}")
    stamp_lists = {b: sorted(per.keys()) for b, per in rows.items()}
    reference = stamp_lists[0]
    for b, stamps in stamp_lists.items():
        if stamps != reference:
            raise RaggedSeriesError(f"building {b} covers different timestamps")
    for i in range(1, len(reference)):
        if reference[i] - reference[i - 1] != STEP:
            raise RaggedSeriesError(
                f"cadence break between {reference[i - 1]} and {reference[i]}")
    t = len(reference)
    if t % SAMPLES_PER_DAY != 0:
        raise RaggedSeriesError(f"{t} samples do not cover whole days")
    series = np.zeros((len(ids), 3, t))
    for b in ids:
        per = rows[b]
        for t_idx, stamp in enumerate(reference):
            series[b, :, t_idx] = per[stamp]
    temperature = solar = None
    if has_weather:
        temperature = np.array([weather_by_stamp[s][0] for s in reference])
        solar = np.array([weather_by_stamp[s][1] for s in reference])
    return MultiEnergyDataset(reference[0], series, temperature, solar, meta)
