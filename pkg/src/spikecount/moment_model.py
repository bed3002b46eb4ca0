"""Theoretical trigonometric moment matrices of a contaminated location mixture.

The projected signal ``theta`` is a mixture of point masses (isolated
spikes of each neuron) and an absolutely continuous component (overlapping
spikes). Its moment matrix ``E[T_p(theta)]`` splits into a discrete part,
whose rank equals the number of atoms, and a bounded continuous part.
"""

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special

from .errors import DistinctAtomsError, NotFoundError, QuadratureError, SpecError
from .hermitian import HermitianMatrix, eigenvalues_desc, trig_matrix

TWO_PI = 2.0 * math.pi
WEIGHT_SUM_TOL = 1e-12
MIN_ATOM_GAP = 1e-9
NEAR_COLLISION_GAP = 0.05
DEFAULT_WRAP_TERMS = 8
WRAP_TAIL_TOL = 1e-12
EXTREMA_GRID = 8192
EXTREMA_TOL = 1e-10
SIMPSON_PANELS = 4096
SIMPSON_TOL = 1e-10
SIMPSON_MAX_PANELS = 2**20


# --------------------------------------------------------------------------
# contamination densities on the real line


class Density:
    """A probability density on the real line.

    Subclasses provide ``pdf``, ``tail_mass`` (probability outside
    ``[lo, hi)``), ``sample`` and the points where ``pdf`` jumps.
    """

    name = "density"

    def pdf(self, x):
        raise NotImplementedError

    def tail_mass(self, lo, hi):
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError

    def breakpoints(self):
        return ()

    def params(self):
        raise NotImplementedError

    def to_dict(self):
        return {"name": self.name, "params": self.params()}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class Uniform(Density):
    name = "uniform"

    def __init__(self, low=0.0, high=TWO_PI):
        if not high > low:
            raise SpecError("uniform density needs high > low")
        self.low = float(low)
        self.high = float(high)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x < self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    def tail_mass(self, lo, hi):
        covered = max(0.0, min(hi, self.high) - max(lo, self.low))
        return max(0.0, 1.0 - covered / (self.high - self.low))

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def breakpoints(self):
        return (self.low, self.high)

    def params(self):
        return {"low": self.low, "high": self.high}


class WrappedNormal(Density):
    """Normal density on the line; wrapping happens in :class:`WrappedDensity`."""

    name = "wrapped_normal"

    def __init__(self, mean=0.0, sd=1.0):
        if not sd > 0:
            raise SpecError("wrapped normal needs sd > 0")
        self.mean = float(mean)
        self.sd = float(sd)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * math.sqrt(TWO_PI))

    def tail_mass(self, lo, hi):
        a = (lo - self.mean) / self.sd
        b = (hi - self.mean) / self.sd
        return float(special.ndtr(a) + special.ndtr(-b))

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)

    def params(self):
        return {"mean": self.mean, "sd": self.sd}


class KernelSmoothed(Density):
    """Gaussian-kernel smoothing of an empirical sample.

    ``bandwidth`` defaults to Silverman's rule.
    """

    name = "kernel_smoothed"

    def __init__(self, points, bandwidth=None):
        pts = np.asarray(points, dtype=float).ravel()
        if pts.size == 0:
            raise SpecError("kernel density needs at least one point")
        if bandwidth is None:
            spread = pts.std(ddof=1) if pts.size > 1 else 0.0
            bandwidth = 1.06 * spread * pts.size ** (-0.2) if spread > 0 else 0.1
        if not bandwidth > 0:
            raise SpecError("kernel bandwidth must be positive")
        self.points = pts
        self.bandwidth = float(bandwidth)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.points) / self.bandwidth
        k = np.exp(-0.5 * z * z).mean(axis=-1)
        return k / (self.bandwidth * math.sqrt(TWO_PI))

    def tail_mass(self, lo, hi):
        a = (lo - self.points) / self.bandwidth
        b = (hi - self.points) / self.bandwidth
        return float(np.mean(special.ndtr(a) + special.ndtr(-b)))

    def sample(self, rng, size):
        centers = rng.choice(self.points, size=size)
        return centers + rng.normal(0.0, self.bandwidth, size)

    def params(self):
        return {"points": self.points.tolist(), "bandwidth": self.bandwidth}


DENSITIES = {cls.name: cls for cls in (Uniform, WrappedNormal, KernelSmoothed)}


def density_from_dict(d):
    try:
        cls = DENSITIES[d["name"]]
    except KeyError as exc:
        raise SpecError(f"unknown or missing density name in {d!r}") from exc
    return cls(**d.get("params", {}))


class WrappedDensity:
    """``mu -> sum_j f(mu + 2 pi j)`` on [0, 2 pi), truncated to |j| <= J.

    ``J`` starts at ``wrap_terms`` and grows until the mass of ``f`` outside
    ``[-2 pi J, 2 pi (J + 1))`` is below 1e-12.
    """

    def __init__(self, density, wrap_terms=None):
        self.density = density
        j = DEFAULT_WRAP_TERMS if wrap_terms is None else int(wrap_terms)
        if wrap_terms is None:
            while density.tail_mass(-TWO_PI * j, TWO_PI * (j + 1)) >= WRAP_TAIL_TOL:
                j *= 2
                if j > 1_000_000:
                    raise SpecError("density tails too heavy to wrap")
        self.wrap_terms = j

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        shifts = TWO_PI * np.arange(-self.wrap_terms, self.wrap_terms + 1)
        return self.density.pdf(mu[..., None] + shifts).sum(axis=-1)

    def breakpoints(self):
        """Discontinuities of the wrapped density inside (0, 2 pi)."""
        pts = {float(np.mod(b, TWO_PI)) for b in self.density.breakpoints()}
        return sorted(b for b in pts if MIN_ATOM_GAP < b < TWO_PI - MIN_ATOM_GAP)

    def _refine(self, grid, values, sign):
        i = int(np.argmax(sign * values))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        best_x, best = grid[i], sign * values[i]
        g = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c, d = b - g * (b - a), a + g * (b - a)
        fc, fd = sign * float(self(c)), sign * float(self(d))
        while b - a > EXTREMA_TOL:
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = sign * float(self(c))
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = sign * float(self(d))
        for x, f in ((c, fc), (d, fd)):
            if f > best:
                best_x, best = x, f
        return best_x, sign * best

    @cached_property
    def extrema(self):
        """``(min, max)`` of the wrapped density over [0, 2 pi)."""
        grid = np.linspace(0.0, TWO_PI, EXTREMA_GRID, endpoint=False)
        values = self(grid)
        _, lo = self._refine(grid, values, -1.0)
        _, hi = self._refine(grid, values, 1.0)
        return max(lo, 0.0), hi

    def mass(self):
        return float(self.fourier_coefficients(0)[0].real)

    def fourier_coefficients(self, p, panels=SIMPSON_PANELS, tol=SIMPSON_TOL):
        """``c_t = int_0^{2 pi} exp(-i t mu) w(mu) dmu`` for t = 0..p.

        Composite Simpson on each smooth piece between breakpoints, doubling
        the panel count until successive estimates agree to ``tol``.
        """
        edges = [0.0, *self.breakpoints(), TWO_PI]
        lags = np.arange(p + 1)
        prev = None
        change = math.inf
        while panels <= SIMPSON_MAX_PANELS:
            xs, ws = [], []
            for a, b in zip(edges[:-1], edges[1:]):
                k = max(2, int(round(panels * (b - a) / TWO_PI)))
                k += k % 2
                x = np.linspace(a, b, k + 1)
                w = np.ones(k + 1)
                w[1:-1:2] = 4.0
                w[2:-1:2] = 2.0
                w *= (b - a) / (3.0 * k)
                # one-sided limits at the piece ends
                nudge = 1e-13 * TWO_PI
                x_eval = x.copy()
                x_eval[0] += nudge
                x_eval[-1] -= nudge
                xs.append((x, x_eval))
                ws.append(w)
            x = np.concatenate([pair[0] for pair in xs])
            x_eval = np.concatenate([pair[1] for pair in xs])
            w = np.concatenate(ws) * self(x_eval)
            coeffs = np.exp(-1j * np.outer(lags, x)) @ w
            if prev is not None:
                change = float(np.max(np.abs(coeffs - prev)))
                if change < tol:
                    return coeffs
            prev = coeffs
            panels *= 2
        raise QuadratureError("Simpson rule did not converge", residual=change)


# --------------------------------------------------------------------------
# mixture specification


def circular_gap(a, b):
    d = abs(float(np.mod(a - b, TWO_PI)))
    return min(d, TWO_PI - d)


class MixtureSpec:
    """Point masses ``(weight, location)`` plus a weighted continuous part.

    Locations are reduced mod 2 pi and atoms are sorted by decreasing
    weight. Two locations that coincide mod 2 pi are rejected; near
    collisions only warn, since they are legal but hard to resolve.
    """

    def __init__(self, atoms, pi_cont=0.0, f_cont=None, wrap_terms=None):
        atoms = [(float(w), float(loc)) for w, loc in atoms]
        if not atoms:
            raise SpecError("a mixture needs at least one atom")
        for w, loc in atoms:
            if not (w > 0 and math.isfinite(loc)):
                raise SpecError(f"bad atom ({w}, {loc}): weight must be > 0, location finite")
        pi_cont = float(pi_cont)
        if pi_cont < 0:
            raise SpecError("pi_cont must be nonnegative")
        total = sum(w for w, _ in atoms) + pi_cont
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise SpecError(f"weights sum to {total!r}, not 1")
        if pi_cont > 0 and f_cont is None:
            raise SpecError("pi_cont > 0 needs a contamination density")

        canon = [(w, float(np.mod(loc, TWO_PI))) for w, loc in atoms]
        canon.sort(key=lambda a: (-a[0], a[1]))
        for i in range(len(canon)):
            for j in range(i + 1, len(canon)):
                gap = circular_gap(canon[i][1], canon[j][1])
                if gap <= MIN_ATOM_GAP:
                    raise DistinctAtomsError(
                        f"atoms at {atoms[i][1]} and {atoms[j][1]} coincide mod 2 pi")
                if gap < NEAR_COLLISION_GAP:
                    warnings.warn(
                        f"atoms {canon[i][1]:.4f} and {canon[j][1]:.4f} are only "
                        f"{gap:.2e} apart mod 2 pi", stacklevel=2)

        self.weights = np.array([w for w, _ in canon])
        self.locations = np.array([loc for _, loc in canon])
        self.pi_cont = pi_cont
        self.f_cont = f_cont
        self.wrapped = None
        if f_cont is not None:
            self.wrapped = f_cont if isinstance(f_cont, WrappedDensity) else WrappedDensity(f_cont, wrap_terms)

    @property
    def nu(self):
        return self.weights.size

    @property
    def atoms(self):
        return list(zip(self.weights.tolist(), self.locations.tolist()))

    def sample(self, rng, size):
        """Draw ``size`` values of the projected signal theta."""
        probs = np.append(self.weights, self.pi_cont)
        probs = probs / probs.sum()
        comp = rng.choice(self.nu + 1, size=size, p=probs)
        out = np.empty(size)
        disc = comp < self.nu
        out[disc] = self.locations[comp[disc]]
        n_cont = int(np.count_nonzero(~disc))
        if n_cont:
            out[~disc] = self.wrapped.density.sample(rng, n_cont)
        return out

    def to_dict(self):
        d = {"atoms": [[w, loc] for w, loc in self.atoms], "pi_cont": self.pi_cont}
        if self.wrapped is not None:
            d["f_cont"] = self.wrapped.density.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            atoms = d["atoms"]
        except (KeyError, TypeError) as exc:
            raise SpecError("mixture document needs 'atoms'") from exc
        f = d.get("f_cont")
        return cls(atoms, d.get("pi_cont", 0.0), density_from_dict(f) if f else None)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"MixtureSpec(atoms={self.atoms!r}, pi_cont={self.pi_cont!r}, f_cont={self.f_cont!r})"


# --------------------------------------------------------------------------
# moment matrices


def m_p_disc(spec, p):
    """Moment matrix of the discrete part: ``sum_i pi_i T_p(mu_i)``."""
    if p < 1:
        raise SpecError("p must be >= 1")
    lags = np.zeros(p + 1, dtype=complex)
    t = np.arange(p + 1)
    for w, loc in zip(spec.weights, spec.locations):
        lags += w * np.exp(-1j * t * loc)
    lags[0] = spec.weights.sum()
    return HermitianMatrix.from_toeplitz(lags)


def m_p_cont(density, p):
    """Moment matrix of a (wrapped) contamination density."""
    if p < 1:
        raise SpecError("p must be >= 1")
    if not isinstance(density, WrappedDensity):
        density = WrappedDensity(density)
    coeffs = density.fourier_coefficients(p)
    coeffs[0] = coeffs[0].real
    return HermitianMatrix.from_toeplitz(coeffs)


def m_p(spec, p):
    """``M_p = M_{p,disc} + pi_cont M_{p,cont}``."""
    disc = m_p_disc(spec, p)
    if spec.pi_cont == 0:
        return disc
    return disc + spec.pi_cont * m_p_cont(spec.wrapped, p)


def _dirichlet_ratio(delta, p):
    """``(1 - e^{i(p+1)delta}) / (1 - e^{i delta})``."""
    den = 1.0 - np.exp(1j * delta)
    if abs(den) < 1e-12:
        raise DistinctAtomsError("coincident atoms make the B-matrix singular")
    return (1.0 - np.exp(1j * (p + 1) * delta)) / den


def b_matrix(spec, p):
    """The nu x nu matrix sharing the nonzero spectrum of ``m_p_disc``.

    Entry (j, k) is ``sqrt(pi_j pi_k) (1 - e^{i(p+1)(mu_j - mu_k)}) / (1 - e^{i(mu_j - mu_k)})``
    off the diagonal and ``(p+1) pi_j`` on it.
    """
    if p < 1:
        raise SpecError("p must be >= 1")
    nu = spec.nu
    w, mu = spec.weights, spec.locations
    b = np.zeros((nu, nu), dtype=complex)
    for j in range(nu):
        b[j, j] = (p + 1) * w[j]
        for k in range(j):
            b[j, k] = math.sqrt(w[j] * w[k]) * _dirichlet_ratio(mu[j] - mu[k], p)
    return HermitianMatrix(b)


@dataclass(frozen=True)
class EigenBounds:
    """Per-index eigenvalue intervals, index 0 is the largest eigenvalue."""

    lower: np.ndarray
    upper: np.ndarray
    radius: float
    wrapped_min: float
    wrapped_max: float

    def contains(self, values, slack=0.0):
        v = np.asarray(values, dtype=float)
        return (v >= self.lower - slack) & (v <= self.upper + slack)


def separation_radius(spec, p):
    """``sqrt(2 sum_{j<k} pi_j pi_k |ratio_jk|^2)``: the off-diagonal mass of B."""
    w, mu = spec.weights, spec.locations
    total = 0.0
    for j in range(spec.nu):
        for k in range(j + 1, spec.nu):
            total += w[j] * w[k] * abs(_dirichlet_ratio(mu[j] - mu[k], p)) ** 2
    return math.sqrt(2.0 * total)


def eigen_bounds(spec, p):
    """Lower/upper bounds on every eigenvalue of ``m_p(spec, p)``.

    For the first ``nu`` eigenvalues the interval is ``(p+1) pi_i`` shifted
    by the contamination extremes and widened by the separation radius;
    the remaining ones are confined to the contamination band.
    """
    if p < spec.nu:
        raise SpecError(f"bounds need p >= nu ({spec.nu}), got {p}")
    if spec.pi_cont > 0:
        wmin, wmax = spec.wrapped.extrema
    else:
        wmin = wmax = 0.0
    band_lo = TWO_PI * spec.pi_cont * wmin
    band_hi = TWO_PI * spec.pi_cont * wmax
    r = separation_radius(spec, p)
    lower = np.full(p + 1, band_lo)
    upper = np.full(p + 1, band_hi)
    lower[: spec.nu] += (p + 1) * spec.weights - r
    upper[: spec.nu] += (p + 1) * spec.weights + r
    return EigenBounds(lower, upper, r, wmin, wmax)


def p_gamma(spec, gamma, p_cap=100):
    """Smallest ``p <= p_cap`` whose bounds separate atom and noise eigenvalues.

    The bounds are sufficient, not necessary; failure to find such a ``p``
    raises :class:`NotFoundError`.
    """
    if not gamma > 0:
        raise SpecError("gamma must be positive")
    if p_cap < spec.nu:
        raise SpecError("p_cap must be >= nu")
    nu = spec.nu
    for p in range(nu, p_cap + 1):
        b = eigen_bounds(spec, p)
        level = gamma * math.sqrt(p + 1)
        if b.lower[nu - 1] > level and b.upper[nu] < level:
            return p
    raise NotFoundError(f"no p <= {p_cap} satisfies the separation bounds for gamma={gamma}")


def model_eigenvalues(spec, p):
    return eigenvalues_desc(m_p(spec, p))


__all__ = [
    "Density", "Uniform", "WrappedNormal", "KernelSmoothed", "WrappedDensity",
    "MixtureSpec", "EigenBounds", "m_p_disc", "m_p_cont", "m_p", "b_matrix",
    "eigen_bounds", "separation_radius", "p_gamma", "density_from_dict",
    "circular_gap", "trig_matrix", "model_eigenvalues",
]
