import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_hermitian
from spikecount.errors import SolverError
from spikecount.hermitian import (HermitianMatrix, eigenvalues_desc, jacobi_symmetric,
                                  trig_matrix)


def charpoly_roots(h):
    """Eigenvalues of a dim <= 3 matrix from hand-expanded characteristic polynomials."""
    a = np.asarray(h)
    n = a.shape[0]
    if n == 1:
        return np.array([a[0, 0].real])
    if n == 2:
        tr = (a[0, 0] + a[1, 1]).real
        det = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]).real
        coeffs = [1.0, -tr, det]
    else:
        tr = np.trace(a).real
        minors = sum((a[i, i] * a[j, j] - a[i, j] * a[j, i]).real
                     for i, j in ((0, 1), (0, 2), (1, 2)))
        det = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
               - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
               + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])).real
        coeffs = [1.0, -tr, minors, -det]
    return np.sort(np.roots(coeffs).real)[::-1]


def householder_unitary(rng, dim, reflections=3):
    u = np.eye(dim, dtype=complex)
    for _ in range(reflections):
        v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        v /= np.linalg.norm(v)
        u = u @ (np.eye(dim) - 2.0 * np.outer(v, v.conj()))
    return u


class TestTrigMatrix:
    def test_order_zero(self):
        for x in (0.0, 1.3, -7.0):
            assert np.array_equal(trig_matrix(x, 0).to_array(), [[1.0]])

    def test_zero_angle_all_ones(self):
        assert np.allclose(trig_matrix(0.0, 2).to_array(), np.ones((3, 3)))

    def test_quarter_turn(self):
        got = trig_matrix(np.pi / 2, 1).to_array()
        assert np.allclose(got, [[1, 1j], [-1j, 1]], atol=1e-15)

    def test_first_row_and_outer_product(self):
        x, p = 0.77, 5
        t = trig_matrix(x, p).to_array()
        assert np.allclose(t[0], np.exp(1j * x * np.arange(p + 1)))
        v = np.exp(-1j * x * np.arange(p + 1))
        assert np.allclose(t, np.outer(v, v.conj()))

    def test_rank_one_spectrum(self):
        ev = eigenvalues_desc(trig_matrix(2.1, 6)).values
        assert ev[0] == pytest.approx(7.0, abs=1e-10)
        assert np.allclose(ev[1:], 0.0, atol=1e-10)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            trig_matrix(0.1, -1)
        with pytest.raises(ValueError):
            trig_matrix(np.inf, 2)


class TestHermitianMatrix:
    def test_symmetric_by_construction(self):
        raw = np.array([[1 + 5j, 99], [2 - 3j, 4]])
        h = HermitianMatrix(raw).to_array()
        assert np.array_equal(h, h.conj().T)
        assert h[0, 0] == 1 and h[0, 1] == 2 + 3j

    def test_read_only(self):
        h = HermitianMatrix(np.eye(2))
        with pytest.raises(ValueError):
            h.to_array()[0, 0] = 5

    def test_rejects_nonfinite_and_nonsquare(self):
        with pytest.raises(ValueError):
            HermitianMatrix([[np.nan]])
        with pytest.raises(ValueError):
            HermitianMatrix(np.zeros((2, 3)))

    def test_arithmetic(self):
        a = HermitianMatrix([[1, 0], [1j, 2]])
        b = HermitianMatrix(np.eye(2))
        assert (a + b)[1, 1] == 3
        assert (2 * a)[1, 0] == 2j
        assert a * 2 == 2 * a
        with pytest.raises(TypeError):
            a * 1j

    def test_toeplitz(self):
        h = HermitianMatrix.from_toeplitz([2, 1j, 3]).to_array()
        assert h[2, 0] == 3 and h[1, 0] == 1j and h[0, 1] == -1j and h[0, 2] == 3


class TestEigenvalues:
    def test_identity(self):
        assert eigenvalues_desc(HermitianMatrix(np.eye(2))).tolist() == pytest.approx([1, 1])

    def test_two_by_two_by_hand(self):
        # (2 - l)^2 - 1 = 0
        ev = eigenvalues_desc(HermitianMatrix([[2, 1j], [-1j, 2]]))
        assert ev.tolist() == pytest.approx([3.0, 1.0], abs=1e-12)

    @given(st.integers(1, 3), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_matches_characteristic_polynomial(self, dim, seed):
        h = random_hermitian(np.random.default_rng(seed), dim)
        assert np.allclose(eigenvalues_desc(h).values, charpoly_roots(h), atol=1e-8)

    @given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    @settings(max_examples=80, deadline=None)
    def test_matches_lapack_on_embedding(self, dim, seed, scale):
        h = random_hermitian(np.random.default_rng(seed), dim, scale)
        oracle = np.sort(np.linalg.eigvalsh(h.real_embedding()))[::-1][::2]
        got = eigenvalues_desc(h)
        assert np.max(np.abs(got.values - oracle)) < 1e-8 * max(1.0, scale)
        assert np.all(np.diff(got.values) <= 0)
        assert abs(got.values.sum() - h.trace()) <= 1e-9 * max(1, abs(h.trace()))

    def test_debug_reconstruction(self):
        h = random_hermitian(np.random.default_rng(3), 6)
        assert np.allclose(eigenvalues_desc(h, debug=True).values,
                           eigenvalues_desc(h).values)

    def test_repeated_eigenvalues(self):
        u = householder_unitary(np.random.default_rng(0), 5)
        h = HermitianMatrix(u @ np.diag([2.0, 2.0, 2.0, -1.0, -1.0]) @ u.conj().T)
        assert np.allclose(eigenvalues_desc(h).values, [2, 2, 2, -1, -1], atol=1e-10)

    def test_sweep_cap_raises_with_residual(self):
        s = random_hermitian(np.random.default_rng(1), 4).real_embedding()
        with pytest.raises(SolverError) as info:
            jacobi_symmetric(s, max_sweeps=1)
        assert info.value.residual > 0

    def test_zero_matrix(self):
        assert eigenvalues_desc(HermitianMatrix(np.zeros((3, 3)))).tolist() == [0, 0, 0]


class TestSpectralProperties:
    @given(st.integers(1, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_weyl_perturbation(self, dim, seed):
        rng = np.random.default_rng(seed)
        h = random_hermitian(rng, dim)
        e = random_hermitian(rng, dim, 1e-3)
        shift = np.abs(eigenvalues_desc(h + e).values - eigenvalues_desc(h).values)
        assert np.all(shift <= e.frobenius_norm() + 1e-12)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_gram_padding(self, cols, extra, seed):
        rng = np.random.default_rng(seed)
        rows = cols + extra
        a = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
        big = eigenvalues_desc(HermitianMatrix(a @ a.conj().T)).values
        small = eigenvalues_desc(HermitianMatrix(a.conj().T @ a)).values
        padded = np.concatenate([small, np.zeros(extra)])
        assert np.max(np.abs(big - padded)) < 1e-8 * max(1.0, big[0])

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_unitary_invariance(self, dim, seed):
        rng = np.random.default_rng(seed)
        h = random_hermitian(rng, dim)
        u = householder_unitary(rng, dim)
        rotated = HermitianMatrix(u @ h.to_array() @ u.conj().T)
        assert np.allclose(eigenvalues_desc(rotated).values, eigenvalues_desc(h).values, atol=1e-8)
