"""Method-of-moments estimate of the number of neurons behind a spike train.

Pipeline: rescale the spikes so the noise has a fixed standard deviation,
project each spike onto the first principal direction, build the
deconvolved sample trigonometric moment matrix and count its eigenvalues
above a threshold. The matrix order ``p`` is the largest one whose
estimated eigenvalue error stays below ``condition_rhs``.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (DeconvolutionError, FormatError, NoAdmissiblePError, SpecError,
                     SpikeCountError)
from .hermitian import HermitianMatrix, eigenvalues_desc

CF_FLOOR = 1e-12
CONDITION_VARIANTS = ("literal_p", "per_j")
THRESHOLD_SCALINGS = ("absolute", "sqrt_p")


@dataclass(frozen=True)
class SpikeMatrix:
    """Aligned spike windows plus a pure-noise sample from the silent region.

    ``noise`` is either a 1-D array of already projected noise values, or an
    ``(m, d)`` array of raw noise windows that the estimator projects onto
    the same direction as the spikes.
    """

    spikes: np.ndarray
    noise: np.ndarray
    sigma: float
    event_samples: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.spikes, dtype=float))
        y = np.asarray(self.noise, dtype=float)
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise SpecError("need at least one spike of length >= 1", stage="spike_matrix")
        if y.ndim not in (1, 2) or y.shape[0] < 1:
            raise SpecError("need at least one noise sample", stage="spike_matrix")
        if y.ndim == 2 and y.shape[1] != s.shape[1]:
            raise SpecError("noise windows and spikes differ in length", stage="spike_matrix")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
            raise SpecError("spike matrix has non-finite entries", stage="spike_matrix")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise SpecError(f"sigma must be positive, got {self.sigma}", stage="spike_matrix")
        object.__setattr__(self, "spikes", s)
        object.__setattr__(self, "noise", y)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self):
        return self.spikes.shape[0]

    @property
    def d(self):
        return self.spikes.shape[1]

    @property
    def m(self):
        return self.noise.shape[0]


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning of the estimator.

    The count threshold is ``gamma`` itself when ``threshold_scaling`` is
    ``"absolute"`` (the setting used in practice, ``gamma = 1``) and
    ``gamma * sqrt(p + 1)`` when it is ``"sqrt_p"``. A fixed ``p`` skips the
    automatic order selection.
    """

    gamma: float = 1.0
    sigma_target: float = 0.1
    epsilon: float = 0.05
    condition_rhs: float = 1.0 / 3.0
    p_cap: int = 64
    zero_pad_fraction: float = 0.01
    condition_variant: str = "literal_p"
    threshold_scaling: str = "absolute"
    p: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise SpecError("epsilon must lie in (0, 1)", stage="config")
        if not self.gamma > 0:
            raise SpecError("gamma must be positive", stage="config")
        if not self.sigma_target > 0:
            raise SpecError("sigma_target must be positive", stage="config")
        if not self.condition_rhs > 0:
            raise SpecError("condition_rhs must be positive", stage="config")
        if self.p_cap < 1:
            raise SpecError("p_cap must be >= 1", stage="config")
        if self.zero_pad_fraction < 0:
            raise SpecError("zero_pad_fraction must be >= 0", stage="config")
        if self.condition_variant not in CONDITION_VARIANTS:
            raise SpecError(f"condition_variant must be one of {CONDITION_VARIANTS}", stage="config")
        if self.threshold_scaling not in THRESHOLD_SCALINGS:
            raise SpecError(f"threshold_scaling must be one of {THRESHOLD_SCALINGS}", stage="config")
        if self.p is not None and self.p < 1:
            raise SpecError("fixed p must be >= 1", stage="config")

    def threshold(self, p):
        if self.threshold_scaling == "sqrt_p":
            return self.gamma * math.sqrt(p + 1)
        return self.gamma


def count_above(eigenvalues, threshold):
    """Number of eigenvalues strictly greater than ``threshold``."""
    return int(np.count_nonzero(np.asarray(eigenvalues, dtype=float) > threshold))


@dataclass(frozen=True)
class EstimateReport:
    p_used: int
    threshold: float
    eigenvalues: tuple
    nu_hat: int
    condition_lhs: float
    alpha: tuple
    omega_bound: Optional[float] = None
    omega_bound_raw: Optional[float] = None
    rms_bound: Optional[float] = None
    p_auto: bool = True
    condition_rhs: Optional[float] = None
    n: Optional[int] = None
    m: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", tuple(float(v) for v in self.eigenvalues))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))

    def rethreshold(self, threshold):
        """Same report with ``nu_hat`` recounted at a new threshold."""
        return replace(self, threshold=float(threshold),
                       nu_hat=count_above(self.eigenvalues, threshold))

    def to_dict(self):
        d = asdict(self)
        d["eigenvalues"] = list(self.eigenvalues)
        d["alpha"] = list(self.alpha)
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise FormatError(f"bad report document: {exc}") from exc

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def format_eigenvalues(self, per_row=10):
        vals = [f"{v:.2f}" for v in self.eigenvalues]
        rows = [" ".join(f"{v:>6}" for v in vals[i:i + per_row]) for i in range(0, len(vals), per_row)]
        return "\n".join(rows)


# --------------------------------------------------------------------------
# pipeline stages


def rescale(data, cfg):
    """Scale spikes and noise so the noise standard deviation is ``cfg.sigma_target``."""
    if not data.sigma > 0:
        raise SpecError("sigma must be positive", stage="rescale")
    factor = cfg.sigma_target / data.sigma
    return SpikeMatrix(data.spikes * factor, data.noise * factor, cfg.sigma_target,
                       data.event_samples)


def zero_pad_count(n, fraction=0.01):
    return max(1, int(math.floor(fraction * n + 0.5)))


def principal_direction(data, cfg=None):
    """Unit first principal component of the spikes padded with zero vectors.

    The zero vectors keep the direction well defined when every spike comes
    from one neuron and the noise is isotropic. The sign is chosen so the
    spikes project to a nonnegative mean.
    """
    cfg = cfg or EstimatorConfig()
    s = data.spikes
    if s.shape[0] < 2:
        raise SpecError("principal direction needs n >= 2 spikes", stage="principal_direction")
    pad = zero_pad_count(s.shape[0], cfg.zero_pad_fraction)
    aug = np.vstack([s, np.zeros((pad, s.shape[1]))])
    centered = aug - aug.mean(axis=0)
    cov = centered.T @ centered / aug.shape[0]
    w, v = np.linalg.eigh(cov)
    if not w[-1] > 1e-300:
        raise SpikeCountError("augmented spikes are all identical", stage="principal_direction")
    alpha = v[:, -1]
    alpha = alpha / np.linalg.norm(alpha)
    if np.mean(s @ alpha) < 0:
        alpha = -alpha
    return alpha


def project(data, alpha):
    """Projections ``X_i = alpha' S_i`` of the spikes."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (data.d,):
        raise SpecError(f"alpha has shape {alpha.shape}, spikes have d={data.d}", stage="project")
    return data.spikes @ alpha


def project_noise(data, alpha):
    if data.noise.ndim == 1:
        return data.noise
    return data.noise @ np.asarray(alpha, dtype=float)


def empirical_cf(samples, lags):
    """``mean(exp(-i t s))`` for each lag ``t``."""
    samples = np.asarray(samples, dtype=float).ravel()
    lags = np.asarray(lags, dtype=float)
    out = np.empty(lags.size, dtype=complex)
    chunk = max(1, 2_000_000 // max(1, lags.size))
    acc = np.zeros(lags.size, dtype=complex)
    for start in range(0, samples.size, chunk):
        block = samples[start:start + chunk]
        acc += np.exp(-1j * np.outer(block, lags)).sum(axis=0)
    out[:] = acc / samples.size
    return out


def _checked_noise_cf(y, p, stage):
    cy = empirical_cf(y, np.arange(1, p + 1))
    small = np.flatnonzero(np.abs(cy) <= CF_FLOOR)
    if small.size:
        lag = int(small[0]) + 1
        raise DeconvolutionError(f"noise characteristic function vanishes at lag {lag}", lag=lag,
                                 stage=stage)
    return cy


def m_hat(x, y, p):
    """Deconvolved sample moment matrix.

    Entry (j, k) is the ratio of the empirical characteristic functions of
    the spike projections and of the noise at lag ``j - k``. The lag-0
    entries are exactly 1.
    """
    if p < 1:
        raise SpecError("p must be >= 1", stage="m_hat")
    lags = np.arange(1, p + 1)
    cx = empirical_cf(x, lags)
    cy = _checked_noise_cf(y, p, "m_hat")
    return HermitianMatrix.from_toeplitz(np.concatenate([[1.0], cx / cy]))


def condition_lhs(y, n, p, cfg=None, noise_cf=None):
    """Plug-in estimate of the eigenvalue error bound at order ``p``.

    With ``literal_p`` every summand uses the noise characteristic function
    at lag ``p``; with ``per_j`` the summand for lag ``j`` uses lag ``j``.
    ``noise_cf`` may supply precomputed values at lags 1..p.
    """
    cfg = cfg or EstimatorConfig()
    if p < 1:
        raise SpecError("p must be >= 1", stage="condition")
    cy = noise_cf[:p] if noise_cf is not None else empirical_cf(y, np.arange(1, p + 1))
    mod = np.abs(cy)
    used = mod[p - 1:] if cfg.condition_variant == "literal_p" else mod
    if np.any(used <= CF_FLOOR):
        lag = p if cfg.condition_variant == "literal_p" else int(np.argmax(used <= CF_FLOOR)) + 1
        raise DeconvolutionError(f"noise characteristic function vanishes at lag {lag}", lag=lag,
                                 stage="condition")
    eps = cfg.epsilon
    keep = 1.0 - eps
    j = np.arange(1, p + 1)
    psi = np.full(p, mod[p - 1]) if cfg.condition_variant == "literal_p" else mod
    first = 2.0 / (keep**2 * n) * np.sum((p - j + 1) / ((p + 1) * psi**2))
    return math.sqrt(first + eps**2 * p / keep**2)


def condition_scan(y, n, cfg=None):
    """``condition_lhs`` for p = 1..p_cap, ``inf`` where it is undefined."""
    cfg = cfg or EstimatorConfig()
    cy = empirical_cf(y, np.arange(1, cfg.p_cap + 1))
    out = np.full(cfg.p_cap, math.inf)
    for p in range(1, cfg.p_cap + 1):
        try:
            out[p - 1] = condition_lhs(None, n, p, cfg, noise_cf=cy)
        except DeconvolutionError:
            pass
    return out


def select_p_max(y, n, cfg=None):
    """Largest ``p <= p_cap`` whose condition value is at most ``condition_rhs``.

    Every order is evaluated since the condition need not be monotone in p.
    """
    cfg = cfg or EstimatorConfig()
    values = condition_scan(y, n, cfg)
    ok = np.flatnonzero(values <= cfg.condition_rhs)
    if ok.size == 0:
        raise NoAdmissiblePError(
            f"no p in 1..{cfg.p_cap} meets the condition (p=1 gives {values[0]:.3f} > "
            f"{cfg.condition_rhs:.3f}); use more noise samples or a smaller noise scale")
    return int(ok[-1]) + 1


def omega_bound(moduli, m, epsilon, clamp=True):
    """Bound on the probability that some noise CF estimate is off by a factor > epsilon.

    The ``1 + O(1/m)`` factors are dropped, so this is an asymptotic-order
    value; ``clamp`` restricts it to [0, 1].
    """
    mod = np.asarray(moduli, dtype=float)
    if np.any(mod <= 0):
        raise SpecError("characteristic-function moduli must be positive", stage="omega_bound")
    if m < 2:
        raise SpecError("need m >= 2", stage="omega_bound")
    a = epsilon * mod
    fourth = 6.0 / (m**2 * a**4)
    sixth = 42.0 / (m**3 * a**6)
    total = float(np.sum(np.minimum(fourth, sixth)))
    return min(max(total, 0.0), 1.0) if clamp else total


def rms_bound(psi_moduli, n, epsilon, p):
    """Root-mean-square eigenvalue error bound given |psi| at lags 1..p."""
    psi = np.asarray(psi_moduli, dtype=float)[:p]
    if psi.size != p:
        raise SpecError(f"need {p} moduli, got {psi.size}", stage="rms_bound")
    if np.any(psi <= 0):
        raise SpecError("moduli must be positive", stage="rms_bound")
    j = np.arange(1, p + 1)
    s = np.sum((p - j + 1) / ((p + 1) * psi**2))
    return math.sqrt(2.0 / (n * (1.0 - epsilon) ** 2) * s + p * epsilon**2 / (1.0 - epsilon) ** 2)


def estimate_from_projections(x, y, cfg=None, alpha=()):
    """Order selection, moment matrix and eigenvalue count for projected samples."""
    cfg = cfg or EstimatorConfig()
    n, m = len(x), len(y)
    if cfg.p is None:
        p = select_p_max(y, n, cfg)
        auto = True
    else:
        p = cfg.p
        auto = False
    lhs = condition_lhs(y, n, p, cfg)
    mat = m_hat(x, y, p)
    eig = eigenvalues_desc(mat)
    moduli = np.abs(empirical_cf(y, np.arange(1, p + 1)))
    threshold = cfg.threshold(p)
    return EstimateReport(
        p_used=p,
        threshold=threshold,
        eigenvalues=eig.values,
        nu_hat=count_above(eig.values, threshold),
        condition_lhs=lhs,
        alpha=alpha,
        omega_bound=omega_bound(moduli, m, cfg.epsilon) if m >= 2 else None,
        omega_bound_raw=omega_bound(moduli, m, cfg.epsilon, clamp=False) if m >= 2 else None,
        rms_bound=rms_bound(moduli, n, cfg.epsilon, p),
        p_auto=auto,
        condition_rhs=cfg.condition_rhs,
        n=n,
        m=m,
    )


def estimate_nu(data, cfg=None):
    """Full estimate from a :class:`SpikeMatrix`."""
    cfg = cfg or EstimatorConfig()
    scaled = rescale(data, cfg)
    alpha = principal_direction(scaled, cfg)
    x = project(scaled, alpha)
    y = project_noise(scaled, alpha)
    return estimate_from_projections(x, y, cfg, alpha=alpha)


# --------------------------------------------------------------------------
# CSV interchange


def _read_csv(path, expect):
    path = Path(path)
    try:
        with path.open() as fh:
            header = fh.readline().strip()
            rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    cols = [c.strip() for c in header.split(",")]
    if not expect(cols):
        raise FormatError(f"unexpected header in {path}: {header!r}", field="header")
    if rows.shape[1] != len(cols):
        raise FormatError(f"{path}: {rows.shape[1]} columns but {len(cols)} header names")
    return rows


def _is_sample_header(cols):
    return cols == [f"s{i}" for i in range(1, len(cols) + 1)]


def read_spike_csv(spikes_path, noise_path, sigma=None):
    """Load spikes (header ``s1..sd``) and noise (header ``y`` or ``s1..sd``).

    ``sigma`` defaults to the standard deviation of the noise values.
    """
    spikes = _read_csv(spikes_path, _is_sample_header)
    noise = _read_csv(noise_path, lambda c: c == ["y"] or _is_sample_header(c))
    if noise.shape[1] == 1:
        noise = noise[:, 0]
    if sigma is None:
        sigma = float(np.std(noise, ddof=1)) if noise.size > 1 else 1.0
    return SpikeMatrix(spikes, noise, sigma)


def write_spike_csv(data, spikes_path, noise_path):
    hdr = ",".join(f"s{i}" for i in range(1, data.d + 1))
    np.savetxt(spikes_path, data.spikes, delimiter=",", header=hdr, comments="", fmt="%.17g")
    noise_hdr = "y" if data.noise.ndim == 1 else hdr
    np.savetxt(noise_path, np.atleast_1d(data.noise), delimiter=",", header=noise_hdr,
               comments="", fmt="%.17g")
