"""Central finite-difference gradient checking helpers shared by tests."""

from __future__ import annotations

import numpy as np


def central_difference(f, array: np.ndarray, index: tuple, h: float = 1e-5) -> float:
    """d f / d array[index] via symmetric perturbation; f takes no args."""
    old = array[index]
    array[index] = old + h
    up = f()
    array[index] = old - h
    down = f()
    array[index] = old
    return (up - down) / (2.0 * h)


def relative_error(analytic: float, numeric: float, floor: float = 1e-4) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_all_coords(f, array: np.ndarray, analytic: np.ndarray,
                     h: float = 1e-5) -> float:
    """Max relative error of the analytic gradient over every coordinate."""
    worst = 0.0
    for index in np.ndindex(array.shape):
        numeric = central_difference(f, array, index, h)
        worst = max(worst, relative_error(float(analytic[index]), numeric))
    return worst


def check_sampled_coords(f, array: np.ndarray, analytic: np.ndarray,
                         rng: np.random.Generator, samples: int,
                         h: float = 1e-5) -> float:
    """Max relative error over `samples` randomly chosen coordinates."""
    worst = 0.0
    flat_size = array.size
    picks = rng.choice(flat_size, size=min(samples, flat_size), replace=False)
    for flat in picks:
        index = np.unravel_index(int(flat), array.shape)
        numeric = central_difference(f, array, index, h)
        worst = max(worst, relative_error(float(analytic[index]), numeric))
    return worst
