"""Threshold spike detector for single-channel traces.

Detection runs on a short moving average of the trace in units of the
robust noise scale. The average is a cheap stand-in for template
confirmation: a genuine spike has a peak a few samples wide, while a
heavy-tailed noise spike is usually a single sample, so averaging shrinks
it relative to a real peak.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DetectionError, ExtractionError, SpecError
from .estimator import SpikeMatrix
from .simulator import silent_windows

MAD_SCALE = 1.482602218505602
MIN_SIGMA_SAMPLES = 1000


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings.

    ``refractory_samples`` defaults to ``window_d``; ``confirm_width`` is the
    length of the moving average the threshold is applied to (1 disables it).
    """

    threshold_sigmas: float = 2.25
    window_d: int = 45
    peak_index: int = 15
    refractory_samples: Optional[int] = None
    noise_count_m: int = 2000
    confirm_width: int = 3

    def __post_init__(self):
        if not self.threshold_sigmas > 0:
            raise SpecError("threshold_sigmas must be positive", stage="detector_config")
        if not 0 <= self.peak_index < self.window_d:
            raise SpecError("need 0 <= peak_index < window_d", stage="detector_config")
        if self.refractory_samples is None:
            object.__setattr__(self, "refractory_samples", self.window_d)
        if self.refractory_samples < 0:
            raise SpecError("refractory_samples must be >= 0", stage="detector_config")
        if self.noise_count_m < 1:
            raise SpecError("noise_count_m must be >= 1", stage="detector_config")
        if self.confirm_width < 1:
            raise SpecError("confirm_width must be >= 1", stage="detector_config")


def estimate_sigma(trace):
    """Median absolute deviation about the median, scaled to the Gaussian sd."""
    x = np.asarray(trace, dtype=float).ravel()
    if x.size < MIN_SIGMA_SAMPLES:
        raise DetectionError(f"need >= {MIN_SIGMA_SAMPLES} samples to estimate sigma, got {x.size}",
                             stage="estimate_sigma")
    mad = np.median(np.abs(x - np.median(x)))
    if not mad > 0:
        raise DetectionError("trace is constant (zero median absolute deviation)", stage="estimate_sigma")
    return float(MAD_SCALE * mad)


def smooth(z, width):
    """Centered moving average; edges average over the available samples."""
    if width == 1:
        return z
    k = np.ones(width)
    return np.convolve(z, k, mode="same") / np.convolve(np.ones_like(z), k, mode="same")


def find_peaks(stat, threshold, radius, refractory):
    """Aligned, suppressed peak positions of ``stat`` above ``threshold``.

    Each supra-threshold run nominates the location of its maximum, which
    is then moved to the maximum of ``stat`` within ``radius`` samples.
    Peaks closer than ``refractory`` to a larger one are dropped.
    """
    above = stat > threshold
    if not above.any():
        return np.zeros(0, dtype=np.int64)
    padded = np.concatenate([[False], above, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, stops = edges[0::2], edges[1::2]
    cands = np.array([a + int(np.argmax(stat[a:b])) for a, b in zip(starts, stops)])
    n = stat.size
    aligned = []
    for c in cands:
        lo, hi = max(0, c - radius), min(n, c + radius + 1)
        aligned.append(lo + int(np.argmax(stat[lo:hi])))
    aligned = np.unique(aligned)
    # keep-largest suppression
    order = aligned[np.argsort(-stat[aligned], kind="stable")]
    kept = []
    for c in order:
        if all(abs(c - k) > refractory for k in kept):
            kept.append(c)
    return np.sort(np.asarray(kept, dtype=np.int64))


def detect(trace, cfg=None, sigma=None):
    """Detect spikes and harvest silent-region noise.

    Returns a :class:`SpikeMatrix` in units of the noise scale (sigma = 1)
    whose noise part holds ``cfg.noise_count_m`` raw noise windows.
    """
    cfg = cfg or DetectorConfig()
    x = np.asarray(trace, dtype=float).ravel()
    d, pk = cfg.window_d, cfg.peak_index
    if x.size < d:
        raise DetectionError("trace shorter than one window")
    sigma = estimate_sigma(x) if sigma is None else float(sigma)
    if not sigma > 0:
        raise DetectionError("sigma must be positive")
    z = (x - np.median(x)) / sigma
    stat = smooth(z, cfg.confirm_width)

    peaks = find_peaks(stat, cfg.threshold_sigmas, d // 2, cfg.refractory_samples)
    peaks = peaks[(peaks - pk >= 0) & (peaks - pk + d <= x.size)]
    if peaks.size == 0:
        raise DetectionError("no spikes detected")
    spikes = z[(peaks - pk)[:, None] + np.arange(d)]

    crossing = stat > cfg.threshold_sigmas
    near = np.convolve(crossing.astype(np.int64), np.ones(2 * d + 1, dtype=np.int64), mode="same") > 0
    noise = silent_windows(z, ~near, d, cfg.noise_count_m)
    if noise.shape[0] < cfg.noise_count_m:
        raise ExtractionError(f"silent region holds {noise.shape[0]} noise windows, "
                              f"{cfg.noise_count_m} requested", stage="detect")
    return SpikeMatrix(spikes, noise, 1.0, event_samples=peaks)

