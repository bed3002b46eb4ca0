"""Synthetic single-channel spike trains with full ground truth.

Events follow a Bernoulli-per-sample process (the discrete-time Poisson
process), each event picks one of the templates with equal probability, and
overlapping events superpose additively. Noise is unit-variance Gaussian
or Student-t with 5 degrees of freedom scaled by sqrt(3/5).
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ExtractionError, FormatError, SpecError
from .estimator import SpikeMatrix

WINDOW_D = 45
PEAK_INDEX = 15
AMPLITUDE_LADDER = (3.2, 5.5, 7.5, 10.0, 20.0)
# per-template shape: (positive-lobe width, afterwave depth, afterwave delay)
SHAPE_LADDER = ((1.6, 0.45, 8.0), (2.0, 0.35, 7.0), (2.6, 0.25, 5.0),
                (3.2, 0.40, 8.0), (1.75, 0.30, 6.5))
NOISE_KINDS = ("gaussian", "t5_scaled")
OVERLAP_POLICIES = ("natural", "forbid_overlap")


@dataclass(frozen=True)
class SpikeTemplate:
    waveform: np.ndarray
    peak_index: int

    def __post_init__(self):
        w = np.asarray(self.waveform, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise SpecError("template waveform must be a non-empty vector", stage="template")
        if not 0 <= self.peak_index < w.size:
            raise SpecError("peak_index outside waveform", stage="template")
        if not (w[self.peak_index] == w.max() and w.max() > 0):
            raise SpecError("peak_index must hold the positive maximum", stage="template")
        w.setflags(write=False)
        object.__setattr__(self, "waveform", w)

    @property
    def d(self):
        return self.waveform.size

    @property
    def amplitude(self):
        return float(self.waveform[self.peak_index])

    def to_dict(self):
        return {"waveform": self.waveform.tolist(), "peak_index": self.peak_index}


def biphasic_waveform(amplitude, width=2.0, depth=0.3, delay=6.0, d=WINDOW_D, peak_index=PEAK_INDEX):
    """Sharp positive lobe at ``peak_index`` followed by a slow negative afterwave.

    The afterwave is a gamma-like bump that starts at the peak, so the peak
    value is exactly ``amplitude``.
    """
    t = np.arange(d, dtype=float)
    pos = np.exp(-0.5 * ((t - peak_index) / width) ** 2)
    u = np.clip(t - peak_index, 0.0, None) / delay
    neg = depth * u**2 * np.exp(2.0 - 2.0 * u)
    return amplitude * (pos - neg)


def default_templates(nu, least_favorable=True, d=WINDOW_D, peak_index=PEAK_INDEX):
    """Bank of ``nu`` synthetic templates from the fixed amplitude ladder.

    ``least_favorable`` takes the ``nu`` smallest peaks, otherwise the ``nu``
    largest.
    """
    if not 1 <= nu <= len(AMPLITUDE_LADDER):
        raise SpecError(f"nu must be in 1..{len(AMPLITUDE_LADDER)}", stage="templates")
    idx = range(nu) if least_favorable else range(len(AMPLITUDE_LADDER) - nu, len(AMPLITUDE_LADDER))
    bank = []
    for i in idx:
        width, depth, delay = SHAPE_LADDER[i]
        w = biphasic_waveform(AMPLITUDE_LADDER[i], width, depth, delay, d, peak_index)
        bank.append(SpikeTemplate(w, peak_index))
    return bank


@dataclass(frozen=True)
class SimulationSpec:
    templates: tuple
    duration_samples: int
    seed: int
    firing_rate: float = 1.0 / 400.0
    noise_kind: str = "gaussian"
    overlap_policy: str = "natural"

    def __post_init__(self):
        object.__setattr__(self, "templates", tuple(self.templates))
        if not self.templates:
            raise SpecError("need at least one template", stage="simulation_spec")
        if len({t.d for t in self.templates}) != 1:
            raise SpecError("templates must share one length", stage="simulation_spec")
        if not 0 < self.firing_rate < 1:
            raise SpecError("firing_rate must lie in (0, 1)", stage="simulation_spec")
        if self.duration_samples < self.d:
            raise SpecError("duration shorter than one window", stage="simulation_spec")
        if self.noise_kind not in NOISE_KINDS:
            raise SpecError(f"noise_kind must be one of {NOISE_KINDS}", stage="simulation_spec")
        if self.overlap_policy not in OVERLAP_POLICIES:
            raise SpecError(f"overlap_policy must be one of {OVERLAP_POLICIES}", stage="simulation_spec")

    @property
    def d(self):
        return self.templates[0].d

    def to_dict(self):
        return {
            "templates": [t.to_dict() for t in self.templates],
            "duration_samples": self.duration_samples,
            "seed": self.seed,
            "firing_rate": self.firing_rate,
            "noise_kind": self.noise_kind,
            "overlap_policy": self.overlap_policy,
        }

    @classmethod
    def from_dict(cls, d):
        tpl = [SpikeTemplate(np.asarray(t["waveform"]), int(t["peak_index"])) for t in d["templates"]]
        return cls(tpl, int(d["duration_samples"]), int(d["seed"]), float(d["firing_rate"]),
                   d["noise_kind"], d["overlap_policy"])


@dataclass(frozen=True)
class Recording:
    """A voltage trace, ground-truth ``(onset_sample, neuron_id)`` rows and metadata.

    ``signal`` is the noiseless superposition when known.
    """

    trace: np.ndarray
    sampling_rate_hz: float = 15000.0
    ground_truth: Optional[np.ndarray] = None
    sigma_true: Optional[float] = 1.0
    signal: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    spec: Optional[SimulationSpec] = field(default=None, compare=False, repr=False)

    @property
    def duration_samples(self):
        return self.trace.size


def seed_for(seed, index):
    """Independent child seed for repetition ``index`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]).generate_state(1, np.uint64)[0])


def t5_noise(count, rng):
    """Student-t(5) draws scaled by sqrt(3/5) to unit variance."""
    if count < 1:
        raise SpecError("count must be >= 1", stage="t5_noise")
    z = rng.standard_normal(count)
    chi2 = rng.chisquare(5, count)
    return z / np.sqrt(chi2 / 5.0) * math.sqrt(3.0 / 5.0)


def _event_onsets(rng, rate, n_onsets, d, forbid):
    gaps = []
    total = 0
    # draw in blocks; a geometric gap is exactly the Bernoulli-per-sample waiting time
    while total < n_onsets:
        block = rng.geometric(rate, size=max(16, int(1.5 * n_onsets * rate) + 16))
        if forbid:
            short = block < d
            while np.any(short):
                block[short] = rng.geometric(rate, size=int(short.sum()))
                short = block < d
        gaps.append(block)
        total += int(block.sum())
    onsets = np.cumsum(np.concatenate(gaps)) - 1
    return onsets[onsets < n_onsets]


def superpose(duration, ground_truth, templates):
    """Noiseless signal: each ``(onset, neuron)`` row adds its template at ``onset``."""
    signal = np.zeros(duration)
    d = templates[0].d
    if ground_truth is None or len(ground_truth) == 0:
        return signal
    gt = np.asarray(ground_truth, dtype=np.int64)
    for k, tpl in enumerate(templates):
        onsets = gt[gt[:, 1] == k, 0]
        if onsets.size:
            idx = onsets[:, None] + np.arange(d)
            np.add.at(signal, idx.ravel(), np.tile(tpl.waveform, onsets.size))
    return signal


def generate(spec):
    """Simulate a recording. Identical specs give bit-identical output."""
    rng = np.random.default_rng(spec.seed)
    d = spec.d
    n_onsets = spec.duration_samples - d + 1
    onsets = _event_onsets(rng, spec.firing_rate, n_onsets, d, spec.overlap_policy == "forbid_overlap")
    ids = rng.integers(0, len(spec.templates), size=onsets.size)
    gt = np.column_stack([onsets, ids]).astype(np.int64) if onsets.size else np.zeros((0, 2), np.int64)
    signal = superpose(spec.duration_samples, gt, spec.templates)
    if spec.noise_kind == "gaussian":
        noise = rng.standard_normal(spec.duration_samples)
    else:
        noise = t5_noise(spec.duration_samples, rng)
    return Recording(signal + noise, ground_truth=gt, sigma_true=1.0, signal=signal, spec=spec)


# --------------------------------------------------------------------------
# ground-truth bookkeeping


def event_clusters(onsets, d):
    """Group sorted onsets whose d-sample windows intersect (chained)."""
    onsets = np.sort(np.asarray(onsets, dtype=np.int64))
    if onsets.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(onsets) >= d) + 1
    return np.split(onsets, breaks)


def overlap_fraction(ground_truth, d):
    """Share of extracted spikes (clusters) made of two or more events."""
    clusters = event_clusters(np.asarray(ground_truth)[:, 0], d) if len(ground_truth) else []
    if not clusters:
        return 0.0
    return sum(len(c) > 1 for c in clusters) / len(clusters)


def participation_fraction(ground_truth, d):
    """Share of events whose window intersects another event's window."""
    clusters = event_clusters(np.asarray(ground_truth)[:, 0], d) if len(ground_truth) else []
    total = sum(len(c) for c in clusters)
    if total == 0:
        return 0.0
    return sum(len(c) for c in clusters if len(c) > 1) / total


def silent_mask(duration, onsets, d):
    """True where no event window lies within ``d`` samples."""
    busy = np.zeros(duration + 1, dtype=np.int64)
    onsets = np.asarray(onsets, dtype=np.int64)
    if onsets.size:
        lo = np.clip(onsets - d, 0, duration)
        hi = np.clip(onsets + 2 * d, 0, duration)
        np.add.at(busy, lo, 1)
        np.add.at(busy, hi, -1)
    return np.cumsum(busy)[:duration] == 0


def silent_windows(trace, mask, d, m=None):
    """Consecutive non-overlapping d-sample windows inside silent runs, in time order."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, stops = edges[0::2], edges[1::2]
    windows = []
    for a, b in zip(starts, stops):
        for s in range(a, b - d + 1, d):
            windows.append(s)
            if m is not None and len(windows) >= m:
                break
        if m is not None and len(windows) >= m:
            break
    if not windows:
        return np.zeros((0, d))
    idx = np.asarray(windows)[:, None] + np.arange(d)
    return trace[idx]


def oracle_extract(rec, d=WINDOW_D, m=2000, n=None, peak_index=PEAK_INDEX):
    """Error-free spike extraction from ground truth.

    Each cluster of events with intersecting windows becomes one spike,
    aligned so the peak of the noiseless superposition sits at
    ``peak_index`` (the noisy trace peak is used when no noiseless signal is
    attached). Noise windows come from samples at least ``d`` away from
    every event window; sigma is their sample standard deviation.
    """
    if rec.ground_truth is None or len(rec.ground_truth) == 0:
        raise ExtractionError("recording has no ground-truth events")
    trace = rec.trace
    ref = rec.signal if rec.signal is not None else trace
    clusters = event_clusters(rec.ground_truth[:, 0], d)
    peaks = []
    for c in clusters:
        lo, hi = int(c[0]), int(c[-1]) + d
        p = lo + int(np.argmax(ref[lo:hi]))
        if p - peak_index < 0 or p - peak_index + d > trace.size:
            continue
        peaks.append(p)
        if n is not None and len(peaks) >= n:
            break
    if not peaks:
        raise ExtractionError("no spike window fits inside the trace")
    if n is not None and len(peaks) < n:
        raise ExtractionError(f"only {len(peaks)} spikes available, {n} requested")
    peaks = np.asarray(peaks)
    spikes = trace[(peaks - peak_index)[:, None] + np.arange(d)]

    mask = silent_mask(trace.size, rec.ground_truth[:, 0], d)
    noise = silent_windows(trace, mask, d, m)
    if noise.shape[0] < m:
        raise ExtractionError(f"silent region holds {noise.shape[0]} noise windows, {m} requested")
    sigma = float(np.std(noise, ddof=1))
    return SpikeMatrix(spikes, noise, sigma, event_samples=peaks)


# --------------------------------------------------------------------------
# bundle format: <stem>.f64 (little-endian float64 trace) + <stem>.json sidecar


def _stem(path):
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".f64", ".json") else path


def write_bundle(rec, path):
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(rec.trace, dtype="<f8").tofile(stem.with_suffix(".f64"))
    side = {"sampling_rate_hz": rec.sampling_rate_hz, "n_samples": int(rec.trace.size)}
    if rec.sigma_true is not None:
        side["sigma_true"] = rec.sigma_true
    if rec.ground_truth is not None:
        side["ground_truth"] = np.asarray(rec.ground_truth).tolist()
    if rec.spec is not None:
        side["spec"] = rec.spec.to_dict()
    stem.with_suffix(".json").write_text(json.dumps(side))
    return stem


def read_bundle(path):
    """Load a recording bundle; a malformed sidecar raises ``FormatError`` naming the field."""
    stem = _stem(path)
    try:
        trace = np.fromfile(stem.with_suffix(".f64"), dtype="<f8")
    except OSError as exc:
        raise FormatError(f"cannot read trace {stem.with_suffix('.f64')}: {exc}") from exc
    side_path = stem.with_suffix(".json")
    if side_path.exists():
        try:
            side = json.loads(side_path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"sidecar {side_path} is not JSON: {exc}") from exc
        if not isinstance(side, dict):
            raise FormatError("sidecar must be a JSON object")
    else:
        side = {}

    rate = side.get("sampling_rate_hz", 15000.0)
    if not isinstance(rate, (int, float)) or isinstance(rate, bool) or not rate > 0:
        raise FormatError("sampling rate must be a positive number", field="sampling_rate_hz")
    if "n_samples" in side and side["n_samples"] != trace.size:
        raise FormatError(f"trace has {trace.size} samples, sidecar says {side['n_samples']}",
                          field="n_samples")
    sigma = side.get("sigma_true")
    if sigma is not None and (not isinstance(sigma, (int, float)) or not sigma > 0):
        raise FormatError("sigma_true must be a positive number", field="sigma_true")

    gt = None
    if side.get("ground_truth") is not None:
        try:
            gt = np.asarray(side["ground_truth"], dtype=np.int64).reshape(-1, 2)
        except (ValueError, TypeError) as exc:
            raise FormatError("expected [[sample, neuron_id], ...]", field="ground_truth") from exc
        if gt.size and (gt[:, 0].min() < 0 or gt[:, 0].max() >= trace.size):
            raise FormatError("event sample outside the trace", field="ground_truth")

    spec = signal = None
    if side.get("spec") is not None:
        try:
            spec = SimulationSpec.from_dict(side["spec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad simulation spec: {exc}", field="spec") from exc
        if gt is not None:
            signal = superpose(trace.size, gt, spec.templates)
    return Recording(trace, float(rate), gt, sigma, signal, spec)
