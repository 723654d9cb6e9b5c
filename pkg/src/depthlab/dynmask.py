"""Dynamic-object keep mask from per-channel quantile thresholding.

Pixels whose reprojection loss exceeds the beta-quantile in *both* source
channels are dropped (mask value 0); everything else is kept. High loss in
only one channel is the ordinary occlusion case already handled by the
per-pixel minimum, so it stays unmasked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask
from .photometric import LossMap


@dataclass(frozen=True)
class QuantileSpec:
    """Probability level for the loss quantile threshold."""

    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")


def flatten_channel(l: LossMap, c: int) -> np.ndarray:
    """Row-major flattening of loss channel ``c`` (1 or 2, one per source frame)."""
    if c not in (1, 2):
        raise ValueError(f"channel index must be 1 or 2, got {c}")
    if c > l.channels:
        raise ValueError(f"loss map has {l.channels} channels, asked for {c}")
    return l.data[:, :, c - 1].reshape(-1).copy()


def quantile(v: np.ndarray, beta: float) -> float:
    """Linear-interpolation quantile of a sequence.

    Sorts ascending as v_0..v_{n-1}, sets h = beta * (n - 1) and returns
    v_floor(h) + (h - floor(h)) * (v_floor(h)+1 - v_floor(h)).
    """
    QuantileSpec(beta)
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("quantile of an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("quantile input must be finite")
    s = np.sort(arr)
    h = beta * (s.size - 1)
    lo = math.floor(h)
    if lo >= s.size - 1:
        return float(s[-1])
    return float(s[lo] + (h - lo) * (s[lo + 1] - s[lo]))


def channel_mask(l: LossMap, c: int, q_c: float) -> BinaryMask:
    """Flag pixels whose channel-``c`` loss strictly exceeds the threshold."""
    if not np.isfinite(q_c):
        raise ValueError(f"threshold must be finite, got {q_c}")
    if c not in (1, 2) or c > l.channels:
        raise ValueError(f"bad channel index {c}")
    return BinaryMask((l.data[:, :, c - 1] > q_c).astype(np.uint8))


def dynamic_mask(l: LossMap, beta: float) -> BinaryMask:
    """Keep mask: 0 where both channels exceed their beta-quantiles, 1 elsewhere."""
    if l.channels != 2:
        raise ValueError(f"dynamic mask needs exactly 2 loss channels, got {l.channels}")
    q1 = quantile(flatten_channel(l, 1), beta)
    q2 = quantile(flatten_channel(l, 2), beta)
    m1 = channel_mask(l, 1, q1).data.astype(bool)
    m2 = channel_mask(l, 2, q2).data.astype(bool)
    return BinaryMask((~(m1 & m2)).astype(np.uint8))
