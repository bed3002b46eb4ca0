"""Repeated simulate-extract-estimate runs over the experiment grid.

The eight experiments cross noise (Gaussian or scaled t5), spike
extraction (ground-truth oracle or threshold detector) and overlap
(natural firing, about 10% overlapping spikes, or none).
"""

import csv
import io
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .detector import DetectorConfig, detect
from .errors import ExtractionError, SpecError, SpikeCountError
from .estimator import EstimatorConfig, SpikeMatrix, estimate_nu
from .simulator import (PEAK_INDEX, WINDOW_D, SimulationSpec, default_templates, generate,
                        oracle_extract, read_bundle, seed_for)

# experiment id -> (noise kind, extraction, overlap)
EXPERIMENTS = {
    1: ("gaussian", "oracle", "ten_percent"),
    2: ("gaussian", "threshold", "ten_percent"),
    3: ("gaussian", "oracle", "none"),
    4: ("gaussian", "threshold", "none"),
    5: ("t5_scaled", "oracle", "ten_percent"),
    6: ("t5_scaled", "threshold", "ten_percent"),
    7: ("t5_scaled", "oracle", "none"),
    8: ("t5_scaled", "threshold", "none"),
}
FAILED = "failed"
MAX_ATTEMPTS = 4


@dataclass(frozen=True)
class ExperimentSpec:
    """One cell group of the experiment grid.

    When ``experiment_id`` is given, ``noise_kind``, ``detector`` and
    ``overlap`` are taken from the design table and must not contradict it.
    """

    experiment_id: int = 1
    nu_list: tuple = (1, 2, 3, 4, 5)
    n: int = 1000
    m: int = 2000
    repetitions: int = 25
    seed: int = 0
    detector: str = None
    noise_kind: str = None
    overlap: str = None
    firing_rate: float = 1.0 / 400.0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    detector_cfg: DetectorConfig = None

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENTS:
            raise SpecError("experiment_id must be in 1..8", stage="experiment_spec")
        design = dict(zip(("noise_kind", "detector", "overlap"), EXPERIMENTS[self.experiment_id]))
        for name, value in design.items():
            given = getattr(self, name)
            if given is None:
                object.__setattr__(self, name, value)
            elif given != value:
                raise SpecError(f"experiment {self.experiment_id} uses {name}={value}, got {given}",
                                stage="experiment_spec")
        nus = tuple(sorted(set(int(v) for v in self.nu_list)))
        if not nus or nus[0] < 1 or nus[-1] > 5:
            raise SpecError("nu_list must be a non-empty subset of 1..5", stage="experiment_spec")
        object.__setattr__(self, "nu_list", nus)
        if self.n < 2 or self.m < 2:
            raise SpecError("need n >= 2 and m >= 2", stage="experiment_spec")
        if self.repetitions < 0:
            raise SpecError("repetitions must be >= 0", stage="experiment_spec")
        if self.detector_cfg is None:
            object.__setattr__(self, "detector_cfg", DetectorConfig(noise_count_m=self.m))


@dataclass(frozen=True)
class Row:
    repetitions: int
    histogram: tuple  # sorted (outcome, count) pairs; outcome is an int or FAILED
    hits: int

    @property
    def frequency(self):
        return 100.0 * self.hits / self.repetitions if self.repetitions else 0.0

    @property
    def standard_error(self):
        if not self.repetitions:
            return 0.0
        f = self.frequency
        return math.sqrt(f * (100.0 - f) / self.repetitions)


def _hist_key(item):
    k = item[0]
    return (1, 0) if k == FAILED else (0, k)


def make_row(nu, outcomes):
    counts = Counter(outcomes)
    hist = tuple(sorted(counts.items(), key=_hist_key))
    return Row(len(outcomes), hist, counts.get(nu, 0))


class FrequencyTable:
    """Frequencies of a correct count keyed by ``(experiment_id, n, m, nu)``."""

    def __init__(self, rows=None):
        self.rows = dict(sorted((rows or {}).items()))

    def __eq__(self, other):
        return isinstance(other, FrequencyTable) and self.rows == other.rows

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, key):
        return self.rows[key]

    def merge(self, other):
        """Union of two tables; cells present in both pool their repetitions."""
        out = dict(self.rows)
        for key, row in other.rows.items():
            if key in out:
                counts = Counter(dict(out[key].histogram)) + Counter(dict(row.histogram))
                out[key] = Row(out[key].repetitions + row.repetitions,
                               tuple(sorted(counts.items(), key=_hist_key)),
                               out[key].hits + row.hits)
            else:
                out[key] = row
        return FrequencyTable(out)

    def frequency(self, experiment_id, n, m, nu):
        return self.rows[(experiment_id, n, m, nu)].frequency

    FIELDS = ("experiment_id", "n", "m", "nu", "repetitions", "hits", "frequency",
              "standard_error", "histogram")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for (e, n, m, nu), row in self.rows.items():
            hist = ";".join(f"{k}:{c}" for k, c in row.histogram)
            w.writerow([e, n, m, nu, row.repetitions, row.hits, f"{row.frequency:.6g}",
                        f"{row.standard_error:.6g}", hist])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != cls.FIELDS:
            raise SpecError(f"unexpected columns {reader.fieldnames}", stage="frequency_table")
        rows = {}
        for r in reader:
            hist = []
            for part in filter(None, r["histogram"].split(";")):
                k, c = part.rsplit(":", 1)
                hist.append((k if k == FAILED else int(k), int(c)))
            key = (int(r["experiment_id"]), int(r["n"]), int(r["m"]), int(r["nu"]))
            rows[key] = Row(int(r["repetitions"]), tuple(sorted(hist, key=_hist_key)), int(r["hits"]))
        return cls(rows)

    def format(self):
        lines = [f"{'exp':>3} {'n':>6} {'m':>6} {'nu':>3} {'freq%':>6} {'(se)':>7}  histogram"]
        for (e, n, m, nu), row in self.rows.items():
            hist = " ".join(f"{k}:{c}" for k, c in row.histogram)
            lines.append(f"{e:>3} {n:>6} {m:>6} {nu:>3} {row.frequency:>6.0f} "
                         f"({row.standard_error:>4.1f})  {hist}")
        return "\n".join(lines)


def _duration(n, m, rate, d):
    # clusters arrive at about rate * exp(-rate d); silent windows need extra room
    spikes = n / (rate * math.exp(-rate * d))
    silence = m * d / math.exp(-3.0 * rate * d) * 1.5
    return int(1.2 * max(spikes, silence)) + 4 * d


def _take(data, n):
    if data.n < n:
        raise ExtractionError(f"only {data.n} spikes extracted, {n} requested")
    ev = None if data.event_samples is None else data.event_samples[:n]
    return SpikeMatrix(data.spikes[:n], data.noise, data.sigma, ev)


def simulate_and_extract(spec, nu, rep):
    """Spike matrix for one repetition; the recording is lengthened if it runs short."""
    templates = default_templates(nu, least_favorable=True)
    base = seed_for(seed_for(seed_for(spec.seed, spec.experiment_id), nu), rep)
    duration = _duration(spec.n, spec.m, spec.firing_rate, templates[0].d)
    policy = "natural" if spec.overlap == "ten_percent" else "forbid_overlap"
    last = None
    for attempt in range(MAX_ATTEMPTS):
        sim = SimulationSpec(templates, duration, seed_for(base, attempt), spec.firing_rate,
                             spec.noise_kind, policy)
        rec = generate(sim)
        try:
            if spec.detector == "oracle":
                return oracle_extract(rec, WINDOW_D, spec.m, spec.n, PEAK_INDEX)
            return _take(detect(rec.trace, spec.detector_cfg), spec.n)
        except ExtractionError as exc:
            last = exc
            duration *= 2
    raise last


def run_repetition(spec, nu, rep):
    """Estimated count for one repetition, or ``FAILED`` on any pipeline error."""
    try:
        data = simulate_and_extract(spec, nu, rep)
        return estimate_nu(data, spec.estimator).nu_hat
    except SpikeCountError:
        return FAILED


def _run_cell(args):
    spec, nu = args
    return nu, [run_repetition(spec, nu, r) for r in range(spec.repetitions)]


def run_experiment(spec, workers=1):
    """Frequency table over ``spec.nu_list``; deterministic for a fixed seed."""
    if spec.repetitions == 0:
        return FrequencyTable()
    jobs = [(spec, nu) for nu in spec.nu_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    return FrequencyTable({(spec.experiment_id, spec.n, spec.m, nu): make_row(nu, out)
                           for nu, out in results})


def analyze_recording(path, detector_cfg=None, estimator_cfg=None):
    """Detect spikes in a recording bundle and estimate the number of neurons."""
    rec = read_bundle(path)
    data = detect(rec.trace, detector_cfg or DetectorConfig())
    return estimate_nu(data, estimator_cfg or EstimatorConfig())


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
