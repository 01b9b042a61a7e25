"""Forecast-quality and attack-impact metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ZeroTruth(ValueError):
    """A ground-truth entry is zero; MAPE is undefined there."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"truth[{index}] is zero, MAPE undefined")


class ZeroClean(ValueError):
    """A clean-forecast entry is zero; MPE is undefined there."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"clean[{index}] is zero, MPE undefined")


@dataclass(frozen=True)
class BoxStats:
    """Five-number summary of a sample: whiskers cover the full range."""

    median: float
    q1: float
    q3: float
    min: float
    max: float
    n: int


def mape(pred, truth) -> float:
    """Mean absolute percentage error of `pred` against `truth`, in percent."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError("pred and truth must have the same length")
    zeros = np.flatnonzero(truth == 0.0)
    if zeros.size:
        raise ZeroTruth(int(zeros[0]))
    return float(np.mean(np.abs(pred - truth) / truth) * 100.0)


def mpe(adv_pred, clean_pred) -> float:
    """Signed mean percentage deviation of attacked forecasts vs clean ones.

    No absolute value is taken, so deviations of opposite sign cancel.
    """
    adv_pred = np.asarray(adv_pred, dtype=float)
    clean_pred = np.asarray(clean_pred, dtype=float)
    if adv_pred.shape != clean_pred.shape:
        raise ValueError("adv_pred and clean_pred must have the same length")
    zeros = np.flatnonzero(clean_pred == 0.0)
    if zeros.size:
        raise ZeroClean(int(zeros[0]))
    return float(np.mean((adv_pred - clean_pred) / clean_pred) * 100.0)


def box_stats(values) -> BoxStats:
    """Quartiles by linear interpolation between order statistics (R-7)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("box_stats needs at least one value")
    q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    return BoxStats(
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        min=float(values.min()),
        max=float(values.max()),
        n=int(values.size),
    )
