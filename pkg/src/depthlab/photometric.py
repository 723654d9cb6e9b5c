"""Photometric dissimilarity, per-pixel minimum over source frames, and the
masked depth objective.

The photometric error mixes SSIM and L1:

    pe(a, b) = alpha/2 * (1 - SSIM(a, b)) + (1 - alpha) * |a - b|

with the L1 term averaged over channels. The per-depth objective multiplies
the post-minimum loss by a keep mask and adds an edge-aware smoothness term
weighted by gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import BinaryMask, DepthMap, ImageGrid, _frozen

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class LossMap:
    """H×W×C field of nonnegative per-pixel losses (one channel per source frame)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"LossMap expects H×W×C, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("LossMap values must be finite")
        if np.any(arr < 0.0):
            raise ValueError("LossMap values must be nonnegative")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @staticmethod
    def stack(maps: "list[LossMap]") -> "LossMap":
        return LossMap(np.concatenate([m.data for m in maps], axis=2))


@dataclass(frozen=True)
class LossWeights:
    """alpha: SSIM/L1 mix, gamma: smoothness weight, beta: mask quantile level."""

    alpha: float = 0.85
    gamma: float = 0.001
    beta: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")


def _mean3(x: np.ndarray) -> np.ndarray:
    return uniform_filter(x, size=3, mode="reflect")


def ssim_map(a: ImageGrid, b: ImageGrid) -> np.ndarray:
    """Windowed SSIM similarity field in [-1, 1], averaged over channels.

    Uses a 3×3 mean filter with reflect padding and stabilizers
    C1 = 0.01², C2 = 0.03² on unit dynamic range.
    """
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = np.zeros(a.data.shape[:2])
    for c in range(a.channels):
        x = a.data[:, :, c]
        y = b.data[:, :, c]
        mu_x = _mean3(x)
        mu_y = _mean3(y)
        var_x = _mean3(x * x) - mu_x * mu_x
        var_y = _mean3(y * y) - mu_y * mu_y
        cov = _mean3(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
        out += num / den
    return out / a.channels


def photometric_error(a: ImageGrid, b: ImageGrid, w: LossWeights) -> LossMap:
    """Per-pixel photometric error mixing (1 - SSIM)/2 and channel-mean L1."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    l1 = np.abs(a.data - b.data).mean(axis=2)
    if w.alpha == 0.0:
        return LossMap(l1)
    pe = 0.5 * w.alpha * (1.0 - ssim_map(a, b)) + (1.0 - w.alpha) * l1
    # The SSIM stabilizers keep similarity <= 1, so pe stays nonnegative; guard
    # against -0.0 style round-off all the same.
    return LossMap(np.maximum(pe, 0.0))


def min_reprojection(
    losses: LossMap, validity: tuple[BinaryMask, BinaryMask]
) -> tuple[LossMap, BinaryMask]:
    """Per-pixel minimum over the two source-frame loss channels.

    A channel marked invalid at a pixel is excluded from the minimum. Returns
    the single-channel minimum and a marker mask that is 1 where both
    channels were invalid (those pixels carry loss 0).
    """
    if losses.channels != 2:
        raise ValueError(f"expected exactly 2 loss channels, got {losses.channels}")
    v0 = validity[0].data.astype(bool)
    v1 = validity[1].data.astype(bool)
    l0 = np.where(v0, losses.data[:, :, 0], np.inf)
    l1 = np.where(v1, losses.data[:, :, 1], np.inf)
    merged = np.minimum(l0, l1)
    both_invalid = ~(v0 | v1)
    merged = np.where(both_invalid, 0.0, merged)
    return LossMap(merged), BinaryMask(both_invalid.astype(np.uint8))


def edge_aware_smoothness(d: DepthMap, img: ImageGrid) -> float:
    """Mean-normalized depth gradient penalty, attenuated at image edges.

    With d* = d / mean(d):

        mean |∂x d*| e^{-|∂x I|}  +  mean |∂y d*| e^{-|∂y I|}

    where each directional term averages over its own forward-difference grid
    and image gradients are channel means.
    """
    if (d.height, d.width) != (img.height, img.width):
        raise ValueError("depth and image shapes differ")
    dstar = d.data / d.data.mean()
    loss = 0.0
    if d.width > 1:
        gx_d = np.abs(dstar[:, :-1] - dstar[:, 1:])
        gx_i = np.abs(img.data[:, :-1] - img.data[:, 1:]).mean(axis=2)
        loss += float((gx_d * np.exp(-gx_i)).mean())
    if d.height > 1:
        gy_d = np.abs(dstar[:-1, :] - dstar[1:, :])
        gy_i = np.abs(img.data[:-1, :] - img.data[1:, :]).mean(axis=2)
        loss += float((gy_d * np.exp(-gy_i)).mean())
    return loss


def masked_depth_loss(
    lph: LossMap,
    m_dynamic: BinaryMask,
    d: DepthMap,
    img: ImageGrid,
    w: LossWeights,
    exclude: BinaryMask | None = None,
) -> float:
    """Masked per-depth objective: mean(lph * m_dynamic) + gamma * smoothness.

    ``exclude`` marks pixels (e.g. invalid in both warps) removed from the
    photometric mean's numerator and denominator.
    """
    if lph.channels != 1:
        raise ValueError("masked_depth_loss expects the post-minimum single-channel loss")
    if (lph.height, lph.width) != (m_dynamic.height, m_dynamic.width):
        raise ValueError("loss and mask shapes differ")
    term = lph.data[:, :, 0] * m_dynamic.data
    if exclude is not None:
        include = exclude.data == 0
        n = int(include.sum())
        if n == 0:
            raise ValueError("all pixels excluded from the photometric mean")
        photometric = float(term[include].sum() / n)
    else:
        photometric = float(term.mean())
    return photometric + w.gamma * edge_aware_smoothness(d, img)


def total_objective(loss_mono: float, loss_multi: float, loss_fuse: float) -> float:
    """Sum of the three per-depth losses."""
    parts = (loss_mono, loss_multi, loss_fuse)
    for p in parts:
        if not np.isfinite(p) or p < 0.0:
            raise ValueError(f"losses must be finite and nonnegative, got {parts}")
    return float(loss_mono + loss_multi + loss_fuse)
