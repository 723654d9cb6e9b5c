"""Spectral-entropy uncertainty and depth fusion.

The per-pixel depth-bin distribution is Fourier-transformed along the bin
axis; the Shannon entropy of its normalized magnitude spectrum drives a
monotone map to a fusion weight. Note the direction: a *peaked* (confident)
bin distribution has a flat spectrum and therefore *maximal* spectral
entropy, so the fusion weight decreases with entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import DepthMap, _frozen
from .costvolume import ProbabilityVolume

_ENTROPY_SLACK = 1e-6


@dataclass(frozen=True)
class SeuParams:
    """Entropy stabilizer and the two parameters of the uncertainty map."""

    epsilon: float = 1e-8
    gain: float = 6.0
    bias: float = -3.0

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class EntropyField:
    """H×W spectral entropy in nats, within [0, ln(n_bins)] up to slack."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"EntropyField expects H×W, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("entropy values must be finite")
        if np.any(arr < -_ENTROPY_SLACK):
            raise ValueError("entropy values must be nonnegative")
        object.__setattr__(self, "data", _frozen(np.maximum(arr, 0.0)))


@dataclass(frozen=True)
class UncertaintyField:
    """H×W fusion weight in [0, 1]; high values favor the single-frame depth."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"UncertaintyField expects H×W, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("uncertainty values must be finite")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("uncertainty values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(arr))


def fft_depth_axis(pv: ProbabilityVolume) -> np.ndarray:
    """1-D discrete Fourier transform along the depth-bin axis, per pixel."""
    if pv.n_bins < 2:
        raise ValueError("need at least 2 bins")
    return np.fft.fft(pv.probs, axis=0)


def magnitude_probability(spec: np.ndarray) -> np.ndarray:
    """Normalize the magnitude spectrum to a per-pixel distribution.

    An all-zero spectrum (degenerate input) falls back to uniform.
    """
    if spec.ndim != 3:
        raise ValueError(f"expected D×H×W spectrum, got shape {spec.shape}")
    s = np.abs(spec)
    total = s.sum(axis=0, keepdims=True)
    n = s.shape[0]
    uniform = np.full_like(s, 1.0 / n)
    safe = np.where(total > 0.0, total, 1.0)
    return np.where(total > 0.0, s / safe, uniform)


def spectral_entropy(p: np.ndarray, epsilon: float = 1e-8) -> EntropyField:
    """H = -sum_k P_k ln(P_k + epsilon) along the frequency axis."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if p.ndim != 3:
        raise ValueError(f"expected D×H×W distribution, got shape {p.shape}")
    if not np.allclose(p.sum(axis=0), 1.0, atol=1e-5):
        raise ValueError("distributions must be normalized per pixel")
    h = -(p * np.log(p + epsilon)).sum(axis=0)
    bound = np.log(p.shape[0]) + _ENTROPY_SLACK
    if np.any(h > bound):
        raise ValueError("entropy exceeds ln(n_bins)")
    return EntropyField(h)


def uncertainty_from_entropy(h: EntropyField, params: SeuParams, n_bins: int) -> UncertaintyField:
    """Monotone map from spectral entropy to a fusion weight.

    U = sigmoid(gain * (1 - H / ln(n_bins)) + bias). With positive gain this
    is strictly decreasing in H: a peaked (confident) bin distribution gives
    maximal spectral entropy and therefore a *low* weight on the
    single-frame depth. Stands in for the learned uncertainty head.
    """
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    z = params.gain * (1.0 - h.data / np.log(n_bins)) + params.bias
    return UncertaintyField(expit(z))


def fuse_depth(d_multi: DepthMap, d_mono: DepthMap, u: UncertaintyField) -> DepthMap:
    """Convex per-pixel blend: (1 - U) * multi-frame + U * single-frame."""
    if d_multi.data.shape != d_mono.data.shape or d_multi.data.shape != u.data.shape:
        raise ValueError(
            f"shape mismatch: {d_multi.data.shape}, {d_mono.data.shape}, {u.data.shape}"
        )
    return DepthMap((1.0 - u.data) * d_multi.data + u.data * d_mono.data)
