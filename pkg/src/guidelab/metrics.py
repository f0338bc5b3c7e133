"""Desk-scale quality proxies computed directly on latents.

These stand in for the perceptual metrics used on rendered videos
(feature-similarity consistency, image-quality scoring, interpolation
smoothness).  They operate on raw latent tensors because this laboratory
has no decoder; values are comparable between runs of this laboratory and
nothing else.

Column order of the CSV serialization is fixed:
subject, background, imaging, smoothness, interframe_correlation,
sample_count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .freqfilter import butterworth_mask, lowpass
from .prior import MixtureVideoPrior, sample_prior

__all__ = [
    "MetricsReport",
    "subject_consistency_proxy",
    "background_consistency_proxy",
    "imaging_quality_proxy",
    "reference_highfreq_energy",
    "motion_smoothness_proxy",
    "interframe_correlation",
    "aggregate_report",
]

EPS_STAB = 1e-8

_PROXY_CUTOFF = 0.25
_PROXY_ORDER = 4


@lru_cache(maxsize=32)
def _proxy_mask(frames: int, height: int, width: int):
    return butterworth_mask(frames, height, width, _PROXY_CUTOFF, _PROXY_ORDER)


@dataclass(frozen=True)
class MetricsReport:
    subject_consistency_proxy: float
    background_consistency_proxy: float
    imaging_quality_proxy: float
    motion_smoothness_proxy: float
    interframe_correlation: float
    sample_count: int

    def __post_init__(self):
        for name in (
            "subject_consistency_proxy",
            "background_consistency_proxy",
            "interframe_correlation",
        ):
            v = getattr(self, name)
            if not np.isfinite(v) or not -1.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name} must be finite and within [-1, 1], got {v}")
        if not np.isfinite(self.imaging_quality_proxy) or self.imaging_quality_proxy < 0.0:
            raise ValueError("imaging_quality_proxy must be finite and >= 0")
        if not np.isfinite(self.motion_smoothness_proxy):
            raise ValueError("motion_smoothness_proxy must be finite")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    CSV_COLUMNS = (
        "subject_consistency_proxy",
        "background_consistency_proxy",
        "imaging_quality_proxy",
        "motion_smoothness_proxy",
        "interframe_correlation",
        "sample_count",
    )

    def csv_values(self) -> tuple:
        return tuple(getattr(self, c) for c in self.CSV_COLUMNS)


def _frame_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _consecutive_cosine(video: np.ndarray) -> float:
    frames = video.reshape(video.shape[0], -1)
    sims = [_frame_cosine(frames[k], frames[k + 1]) for k in range(frames.shape[0] - 1)]
    return float(np.mean(sims))


def subject_consistency_proxy(video: np.ndarray) -> float:
    """Mean cosine similarity between consecutive frames.

    1 for identical nonzero frames, -1 for sign-alternating frames.  A
    pair of zero-norm frames counts as 1, a single zero-norm frame as 0.
    Invariant to positive global rescaling.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4 or video.shape[0] < 2:
        raise ValueError("need a (frames, channels, height, width) video with >= 2 frames")
    return _consecutive_cosine(video)


def background_consistency_proxy(video: np.ndarray) -> float:
    """Consecutive-frame cosine after low-passing the video.

    Uses the standard proxy filter (cutoff 0.25, order 4), so differences
    confined to the high-frequency band do not count against it.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4 or video.shape[0] < 2:
        raise ValueError("need a (frames, channels, height, width) video with >= 2 frames")
    n, _, h, w = video.shape
    return _consecutive_cosine(lowpass(video, _proxy_mask(n, h, w)))


def _highfreq_energy(video: np.ndarray) -> float:
    """Mean per-frame squared norm of the high-frequency band."""
    n, _, h, w = video.shape
    hp = video - lowpass(video, _proxy_mask(n, h, w))
    return float((hp**2).sum()) / n


def imaging_quality_proxy(video: np.ndarray, reference_energy: float) -> float:
    """High-frequency energy of the video relative to reference samples.

    1.0 means the video keeps as much fine detail as draws from the
    reference distribution; values well below 1 indicate over-smoothing.
    ``reference_energy`` comes from `reference_highfreq_energy`.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise ValueError("need a (frames, channels, height, width) video")
    if not reference_energy > 0.0:
        raise ValueError("reference_energy must be positive")
    return _highfreq_energy(video) / reference_energy


def reference_highfreq_energy(
    prior: MixtureVideoPrior,
    shape: Sequence[int],
    sample_count: int = 1000,
    seed: int = 0,
    condition=None,
) -> float:
    """Mean per-frame high-frequency energy over prior draws."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(sample_count):
        total += _highfreq_energy(sample_prior(prior, condition, shape, rng))
    energy = total / sample_count
    if energy <= 0.0:
        raise ValueError("reference distribution has no high-frequency energy")
    return energy


def motion_smoothness_proxy(video: np.ndarray) -> float:
    """1 - (mean second-difference norm) / (mean first-difference norm + eps).

    Equals 1 for frame sequences linear in time (zero second difference)
    and for constant videos (the stabilizer maps 0/eps to zero penalty);
    jerky motion drives it down and can go negative.  Norms are Frobenius
    per difference, averaged over the available differences.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4 or video.shape[0] < 3:
        raise ValueError("need a video with >= 3 frames")
    frames = video.reshape(video.shape[0], -1)
    d1 = np.diff(frames, axis=0)
    d2 = np.diff(d1, axis=0)
    n1 = float(np.mean(np.linalg.norm(d1, axis=1)))
    n2 = float(np.mean(np.linalg.norm(d2, axis=1)))
    return 1.0 - n2 / (n1 + EPS_STAB)


def interframe_correlation(videos: Sequence[np.ndarray]) -> float:
    """Pooled Pearson correlation between consecutive-frame coordinates.

    Pairs (video[k, c, h, w], video[k+1, c, h, w]) pooled over every
    video, frame pair, and coordinate.  Returns 1 when all videos are
    constant across frames; raises on one-sided degenerate variance.
    """
    if len(videos) < 2:
        raise ValueError("need at least 2 videos")
    xs = np.concatenate([np.asarray(v, dtype=np.float64)[:-1].ravel() for v in videos])
    ys = np.concatenate([np.asarray(v, dtype=np.float64)[1:].ravel() for v in videos])
    vx = float(np.var(xs))
    vy = float(np.var(ys))
    if vx == 0.0 and vy == 0.0:
        if np.array_equal(xs, ys):
            return 1.0
        raise ValueError("degenerate variance in pooled frame pairs")
    if vx == 0.0 or vy == 0.0:
        raise ValueError("degenerate variance in pooled frame pairs")
    cov = float(np.mean((xs - xs.mean()) * (ys - ys.mean())))
    return cov / np.sqrt(vx * vy)


def aggregate_report(videos: Sequence[np.ndarray], reference_energy: float) -> MetricsReport:
    """Mean proxies over a sample set plus the pooled correlation."""
    if len(videos) < 1:
        raise ValueError("need at least one video")
    subject = float(np.mean([subject_consistency_proxy(v) for v in videos]))
    background = float(np.mean([background_consistency_proxy(v) for v in videos]))
    imaging = float(np.mean([imaging_quality_proxy(v, reference_energy) for v in videos]))
    smooth = float(np.mean([motion_smoothness_proxy(v) for v in videos]))
    if len(videos) >= 2:
        corr = interframe_correlation(videos)
    else:
        corr = 0.0
    return MetricsReport(
        subject_consistency_proxy=subject,
        background_consistency_proxy=background,
        imaging_quality_proxy=imaging,
        motion_smoothness_proxy=smooth,
        interframe_correlation=corr,
        sample_count=len(videos),
    )
