"""Standard depth-evaluation metrics (errors down, accuracy up).

Ground-truth pixels outside (0, cap] and pixels flagged invalid are excluded
before computing anything. Accuracy thresholds use a strict '<'.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, DepthMap

CSV_COLUMNS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def to_csv_row(self) -> str:
        return ",".join(repr(getattr(self, k)) for k in CSV_COLUMNS)


def csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def evaluate(
    pred: DepthMap,
    gt: DepthMap,
    valid: BinaryMask | None = None,
    cap: float = 80.0,
    median_scale: bool = False,
) -> DepthMetrics:
    """Compute the seven standard metrics over the valid in-range pixels.

    ``median_scale`` rescales the prediction by median(gt)/median(pred)
    before scoring, as in the monocular evaluation protocol.
    """
    if pred.data.shape != gt.data.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {gt.data.shape}")
    keep = gt.data <= cap
    if valid is not None:
        if valid.data.shape != gt.data.shape:
            raise ValueError("validity mask shape differs from depth")
        keep &= valid.data.astype(bool)
    if not keep.any():
        raise ValueError("no valid pixels to evaluate")
    p = pred.data[keep]
    g = gt.data[keep]
    if median_scale:
        p = p * (np.median(g) / np.median(p))

    ratio = np.maximum(p / g, g / p)
    delta1 = float((ratio < 1.25).mean())
    delta2 = float((ratio < 1.25**2).mean())
    delta3 = float((ratio < 1.25**3).mean())
    diff = p - g
    return DepthMetrics(
        abs_rel=float((np.abs(diff) / g).mean()),
        sq_rel=float((diff * diff / g).mean()),
        rmse=float(np.sqrt((diff * diff).mean())),
        rmse_log=float(np.sqrt(((np.log(p) - np.log(g)) ** 2).mean())),
        delta1=delta1,
        delta2=delta2,
        delta3=delta3,
    )


def region_split_evaluate(
    pred: DepthMap, gt: DepthMap, oracle: BinaryMask, cap: float = 80.0
) -> tuple[DepthMetrics | None, DepthMetrics | None]:
    """Evaluate separately on oracle=0 (static) and oracle=1 (dynamic) pixels.

    An empty region is reported as None rather than zero metrics.
    """
    if oracle.data.shape != gt.data.shape:
        raise ValueError("oracle mask shape differs from depth")
    results = []
    for want in (0, 1):
        region = oracle.data == want
        if not region.any():
            results.append(None)
            continue
        mask = BinaryMask(region.astype(np.uint8))
        try:
            results.append(evaluate(pred, gt, valid=mask, cap=cap))
        except ValueError:
            results.append(None)  # region exists but nothing in depth range
    return results[0], results[1]
