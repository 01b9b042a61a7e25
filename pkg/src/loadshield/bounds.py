"""Interval bounds certifying the big-M constants of the MILP encodings.

Level 0 of an IntervalStack boxes the admissible inputs of the attack
being encoded; level i >= 1 bounds the preactivation of hidden layer i.
Propagation is plain interval arithmetic with the ReLU clip applied
between hidden layers; the input level is not clipped because the raw
input may legitimately be negative (integrity balls near 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import N_FLEX, ImputationVector
from .network import Plnn

DEFAULT_SLACK = 1e-6


@dataclass
class IntervalStack:
    """Per-level lower/upper bounds; lower[0] is the input box."""

    lower: list[np.ndarray]
    upper: list[np.ndarray]
    slack: float = 0.0

    def __post_init__(self):
        for lo, hi in zip(self.lower, self.upper):
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValueError("each level needs lo <= hi element-wise")

    @property
    def levels(self) -> int:
        return len(self.lower)


def init_bounds_availability(
    x: np.ndarray, imputation: ImputationVector, slack: float = DEFAULT_SLACK
) -> tuple[np.ndarray, np.ndarray]:
    """Input box for a masking attack: each flexible entry is either kept
    or replaced by its imputation value, so it ranges between the two.
    The slack widens degenerate intervals for solver stability; fixed
    entries are pinned exactly.
    """
    x = np.asarray(x, dtype=float)
    c = imputation.values
    lo = x.copy()
    hi = x.copy()
    lo[:N_FLEX] = np.minimum(c[:N_FLEX], x[:N_FLEX]) - slack
    hi[:N_FLEX] = np.maximum(c[:N_FLEX], x[:N_FLEX]) + slack
    return lo, hi


def init_bounds_integrity(x: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Input box for a bounded-perturbation attack: sup-norm ball of the
    given radius on flexible entries, fixed entries pinned. No clamping
    to [0, 1]: the threat model bounds the perturbation, not the result.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    x = np.asarray(x, dtype=float)
    lo = x.copy()
    hi = x.copy()
    lo[:N_FLEX] -= radius
    hi[:N_FLEX] += radius
    return lo, hi


def propagate(model: Plnn, lo0: np.ndarray, hi0: np.ndarray, slack: float = 0.0) -> IntervalStack:
    """Push the input box through every hidden layer.

    Returns preactivation bounds per hidden layer on top of the input box.
    """
    lo0 = np.asarray(lo0, dtype=float)
    hi0 = np.asarray(hi0, dtype=float)
    if np.any(lo0 > hi0):
        raise ValueError("input box needs lo <= hi")
    lower, upper = [lo0], [hi0]
    lo, hi = lo0, hi0
    for i in range(model.depth - 1):
        if i > 0:
            lo = np.maximum(0.0, lo)
            hi = np.maximum(0.0, hi)
        lo, hi = _affine_interval(model.weights[i], model.biases[i], lo, hi)
        lower.append(lo)
        upper.append(hi)
    return IntervalStack(lower=lower, upper=upper, slack=slack)


def output_bounds(model: Plnn, stack: IntervalStack) -> tuple[float, float]:
    """Interval on the forecast itself, one affine step past the last level."""
    lo = np.maximum(0.0, stack.lower[-1])
    hi = np.maximum(0.0, stack.upper[-1])
    out_lo, out_hi = _affine_interval(model.weights[-1], model.biases[-1], lo, hi)
    return float(out_lo[0]), float(out_hi[0])


def _affine_interval(W, b, lo, hi):
    Wp = np.maximum(0.0, W)
    Wn = np.minimum(0.0, W)
    return Wp @ lo + Wn @ hi + b, Wn @ lo + Wp @ hi + b


def dump_csv(stack: IntervalStack, path) -> None:
    """Debug dump: one row per (level, unit) with its interval."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer,unit,lower,upper\n")
        for level, (lo, hi) in enumerate(zip(stack.lower, stack.upper)):
            for unit, (a, c) in enumerate(zip(lo, hi)):
                fh.write(f"{level},{unit},{a!r},{c!r}\n")
