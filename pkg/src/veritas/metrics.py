from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .player import SessionResult

METRIC_KEYS = ("rebuffer_ratio", "avg_ssim", "avg_bitrate_mbps", "ssim_change")


@dataclass(frozen=True)
class MetricSet:
    rebuffer_ratio: float
    avg_ssim: float
    avg_bitrate_mbps: float
    ssim_change: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(result: SessionResult) -> MetricSet:
    """Playback metrics; startup delay is excluded from the rebuffer ratio."""
    if not result.ssims:
        raise ValueError("session has no chunks")
    total = result.play_time_s + result.rebuffer_time_s
    ratio = result.rebuffer_time_s / total if total > 0 else 0.0
    ssim = np.asarray(result.ssims)
    change = float(np.abs(np.diff(ssim)).mean()) if len(ssim) > 1 else 0.0
    return MetricSet(float(ratio), float(ssim.mean()), float(np.mean(result.bitrates_mbps)), change)
