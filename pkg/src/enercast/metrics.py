"""Forecast quality metrics and report containers.

Three scores, each on aligned prediction/actual pairs:

- NRMSE: root-mean-square error divided by the maximum of the actual
  series (which must be positive).
- SNR in decibels: 10*log10(signal power / residual power). A perfect
  forecast has zero residual and maps to the +inf marker.
- MAPE in percent, computed over samples whose actual value is non-zero;
  the count of excluded zero-actual samples is reported alongside.

A forecast counts as acceptable when SNR > 8 dB and NRMSE < 0.15.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError, NonPositiveMaxError, RaggedInputError

SNR_ACCEPT_DB = 8.0
NRMSE_ACCEPT = 0.15


def _aligned(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if p.shape[0] != a.shape[0]:
        raise LengthMismatchError(f"series lengths differ: {p.shape[0]} vs {a.shape[0]}")
    if p.shape[0] == 0:
        raise LengthMismatchError("empty series")
    return p, a


def nrmse(predicted, actual) -> float:
    """RMSE normalised by the maximum of the actual series."""
    p, a = _aligned(predicted, actual)
    peak = float(a.max())
    if peak <= 0.0:
        raise NonPositiveMaxError(f"max of actual series is {peak}; cannot normalise")
    return math.sqrt(float(np.mean((p - a) ** 2))) / peak


def snr_db(predicted, actual) -> float:
    """Signal-to-residual power ratio in dB; +inf on a zero residual."""
    p, a = _aligned(predicted, actual)
    residual_power = float(np.sum((a - p) ** 2))
    if residual_power == 0.0:
        return math.inf
    signal_power = float(np.sum(a ** 2))
    if signal_power == 0.0:
        return -math.inf
    return 10.0 * math.log10(signal_power / residual_power)


def mape_pct(predicted, actual) -> tuple[float, int]:
    """Mean absolute percentage error over non-zero actuals.

    Returns (value, excluded) where excluded counts the zero-actual
    samples left out. When every sample is excluded the value is the NaN
    marker.
    """
    p, a = _aligned(predicted, actual)
    keep = a != 0.0
    excluded = int(np.size(a) - np.count_nonzero(keep))
    if not keep.any():
        return math.nan, excluded
    value = float(np.mean(np.abs((p[keep] - a[keep]) / a[keep]))) * 100.0
    return value, excluded


def network_total(per_entity_series) -> np.ndarray:
    """Element-wise sum of aligned per-building (or per-node) series."""
    rows = [np.asarray(r, dtype=np.float64).reshape(-1) for r in per_entity_series]
    if not rows:
        raise RaggedInputError("no series to total")
    length = rows[0].shape[0]
    for i, r in enumerate(rows):
        if r.shape[0] != length:
            raise RaggedInputError(
                f"series {i} has length {r.shape[0]}, expected {length}")
    return np.sum(rows, axis=0)


@dataclass(frozen=True)
class MetricReport:
    """All three scores for one prediction/actual pair."""

    snr_db: float
    nrmse: float
    mape_pct: float
    mape_excluded: int
    n_samples: int

    CSV_COLUMNS = ("SnrDb", "Nrmse", "MapePct", "MapeExcluded", "NSamples", "Acceptable")

    @property
    def acceptable(self) -> bool:
        return self.snr_db > SNR_ACCEPT_DB and self.nrmse < NRMSE_ACCEPT

    def csv_row(self) -> tuple[str, ...]:
        return (repr(self.snr_db), repr(self.nrmse), repr(self.mape_pct),
                str(self.mape_excluded), str(self.n_samples),
                "true" if self.acceptable else "false")

    def to_json(self) -> str:
        return json.dumps({
            "snr_db": self.snr_db, "nrmse": self.nrmse,
            "mape_pct": self.mape_pct, "mape_excluded": self.mape_excluded,
            "n_samples": self.n_samples, "acceptable": self.acceptable,
        })


def evaluate_report(predicted, actual) -> MetricReport:
    p, a = _aligned(predicted, actual)
    value, excluded = mape_pct(p, a)
    return MetricReport(snr_db=snr_db(p, a), nrmse=nrmse(p, a), mape_pct=value,
                        mape_excluded=excluded, n_samples=int(p.shape[0]))


def daily_reports(predicted, actual,
                  samples_per_day: int = 48) -> list[tuple[int, MetricReport]]:
    """Per-day breakdown as (day_index, report) pairs.

    Days whose actual series never goes above zero are skipped (their
    NRMSE is undefined); a partial trailing day is dropped.
    """
    p, a = _aligned(predicted, actual)
    days = p.shape[0] // samples_per_day
    out = []
    for d in range(days):
        lo, hi = d * samples_per_day, (d + 1) * samples_per_day
        if float(a[lo:hi].max()) <= 0.0:
            continue
        out.append((d, evaluate_report(p[lo:hi], a[lo:hi])))
    return out
