"""Small dense Hermitian matrices and their eigenvalues.

Complex scalars are plain Python/numpy ``complex``. Matrices are stored as
the strict lower triangle plus a real diagonal, and the upper triangle is
materialized from that, so a :class:`HermitianMatrix` cannot be
non-Hermitian.

Eigenvalues come from a cyclic Jacobi solver run on the real symmetric
embedding ``[[A, -B], [B, A]]`` of ``H = A + iB``. Each eigenvalue of ``H``
appears exactly twice in the embedding, and the duplicates are folded
back out.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

JACOBI_TOL = 1e-12
MAX_SWEEPS = 100
PAIR_TOL = 1e-8
TRACE_TOL = 1e-9


class HermitianMatrix:
    """Immutable dense complex Hermitian matrix.

    Parameters
    ----------
    entries : array_like, shape (dim, dim)
        Only the strict lower triangle and the real part of the diagonal are
        read; everything else is rebuilt by conjugate symmetry.
    """

    __slots__ = ("_lower", "_diag", "_full")

    def __init__(self, entries):
        a = np.asarray(entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"need a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        self._lower = np.tril(a, -1)
        self._diag = np.real(np.diag(a)).copy()
        full = self._lower + self._lower.conj().T + np.diag(self._diag).astype(complex)
        full.setflags(write=False)
        self._lower.setflags(write=False)
        self._diag.setflags(write=False)
        self._full = full

    @classmethod
    def from_toeplitz(cls, lags):
        """Hermitian Toeplitz matrix with entry (j, k) = ``lags[j - k]`` for j >= k.

        ``lags[0]`` is taken as real; lag ``-t`` entries are the conjugates of
        lag ``t`` by construction.
        """
        lags = np.asarray(lags, dtype=complex)
        n = lags.size
        j, k = np.indices((n, n))
        lower = np.where(j >= k, lags[np.abs(j - k)], 0)
        return cls(lower)

    @property
    def dim(self):
        return self._diag.size

    def to_array(self):
        """Read-only complex ndarray of the full matrix."""
        return self._full

    def __array__(self, dtype=None, copy=None):
        return self._full if dtype is None else self._full.astype(dtype)

    def __getitem__(self, idx):
        return self._full[idx]

    def trace(self):
        return float(self._diag.sum())

    def frobenius_norm(self):
        return float(np.linalg.norm(self._full))

    def __add__(self, other):
        if not isinstance(other, HermitianMatrix):
            return NotImplemented
        return HermitianMatrix(self._full + other._full)

    def __mul__(self, scalar):
        if isinstance(scalar, complex) or np.iscomplexobj(scalar):
            raise TypeError("only real scalars preserve Hermitian symmetry")
        return HermitianMatrix(self._full * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, HermitianMatrix):
            return NotImplemented
        return self._full.shape == other._full.shape and np.array_equal(self._full, other._full)

    def __hash__(self):
        return hash(self._full.tobytes())

    def __repr__(self):
        return f"HermitianMatrix(dim={self.dim})"

    def real_embedding(self):
        """The real symmetric ``2 dim`` matrix ``[[Re H, -Im H], [Im H, Re H]]``."""
        a = self._full.real
        b = self._full.imag
        return np.block([[a, -b], [b, a]])


@dataclass(frozen=True)
class EigenValues:
    """Eigenvalues sorted in descending order."""

    values: np.ndarray
    sweeps: int = 0
    trace_residual: float = 0.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values.tolist())

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def tolist(self):
        return self.values.tolist()


def trig_matrix(x, p):
    """The (p+1)x(p+1) matrix with entry (j, k) = exp(i (k - j) x).

    This is the rank-one outer product ``v v*`` with
    ``v = (1, e^{-ix}, ..., e^{-ipx})``.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    if not np.isfinite(x):
        raise ValueError("x must be finite")
    lags = np.exp(-1j * x * np.arange(p + 1))
    lags[0] = 1.0
    return HermitianMatrix.from_toeplitz(lags)


def _round_robin(n):
    """Disjoint index pairs covering every (p, q) once per sweep, n even."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_symmetric(s, tol=JACOBI_TOL, max_sweeps=MAX_SWEEPS, vectors=False):
    """Cyclic Jacobi on a real symmetric matrix of even order.

    Rotations within a round act on disjoint index pairs, so a whole round
    is applied as one vectorized update.

    Returns
    -------
    diag : ndarray
        Unsorted eigenvalues.
    sweeps : int
    v : ndarray or None
        Accumulated rotations (columns are eigenvectors) when ``vectors``.
    """
    a = np.array(s, dtype=float)
    n = a.shape[0]
    v = np.eye(n) if vectors else None
    stop = tol * (1.0 + np.linalg.norm(a))
    rounds = _round_robin(n)
    eye = np.eye(n, dtype=bool)

    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(a[~eye])
        if off < stop:
            return np.diag(a).copy(), sweep, v
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            live = apq != 0.0
            theta = np.where(live, (aqq - app) / np.where(live, 2.0 * apq, 1.0), 0.0)
            t = np.where(live, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            t = np.where(live & (theta == 0.0), 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c

            rp = a[p, :].copy()
            rq = a[q, :].copy()
            a[p, :] = c[:, None] * rp - sn[:, None] * rq
            a[q, :] = sn[:, None] * rp + c[:, None] * rq
            cp = a[:, p].copy()
            cq = a[:, q].copy()
            a[:, p] = cp * c - cq * sn
            a[:, q] = cp * sn + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            if v is not None:
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = vp * c - vq * sn
                v[:, q] = vp * sn + vq * c

    raise SolverError(f"Jacobi did not converge in {max_sweeps} sweeps", residual=off)


def eigenvalues_desc(h, debug=False):
    """All eigenvalues of a Hermitian matrix, largest first.

    Parameters
    ----------
    h : HermitianMatrix
    debug : bool
        Also accumulate eigenvectors of the embedding and verify
        ``S V = V diag(w)`` to the solver tolerance.

    Raises
    ------
    SolverError
        On non-convergence, an unpaired embedded spectrum or a trace mismatch.
    """
    if not isinstance(h, HermitianMatrix):
        h = HermitianMatrix(h)
    s = h.real_embedding()
    diag, sweeps, vecs = jacobi_symmetric(s, vectors=debug)
    scale = max(1.0, h.frobenius_norm())

    if debug:
        resid = np.linalg.norm(s @ vecs - vecs * diag) / scale
        if resid > 1e-9:
            raise SolverError("reconstruction check failed", residual=resid)

    doubled = np.sort(diag)
    kept = doubled[1::2]
    mismatch = np.max(np.abs(doubled[0::2] - kept))
    if mismatch > PAIR_TOL * scale:
        raise SolverError("embedded spectrum is not paired", residual=mismatch)

    values = kept[::-1]
    trace = h.trace()
    resid = abs(values.sum() - trace)
    if resid > TRACE_TOL * max(1.0, abs(trace)):
        raise SolverError("eigenvalue sum does not match trace", residual=resid)
    return EigenValues(values, sweeps=sweeps, trace_residual=resid)
