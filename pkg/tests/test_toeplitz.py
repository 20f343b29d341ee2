import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linespec.signal import atom, atoms, make_rng, random_separated_taus
from linespec.toeplitz import (
    HermToeplitz,
    NoDecompositionError,
    NotHermitianError,
    NotPSDError,
    diagonal_means,
    hermitian_part,
    project_psd,
    toep,
    toep_adjoint,
    vandermonde_decompose,
)


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return hermitian_part(A)


def first_column(taus, mags, n):
    return atoms(taus, n) @ np.asarray(mags, dtype=complex)


class TestToep:
    def test_identity(self):
        np.testing.assert_array_equal(toep([1, 0, 0]).dense(), np.eye(3))

    def test_conjugate_symmetry(self):
        np.testing.assert_array_equal(toep([2, 1j]).dense(), [[2, -1j], [1j, 2]])

    def test_outer_product(self):
        u = 3 * atom(0.2, 5)
        expected = 3 * np.outer(atom(0.2, 5), atom(0.2, 5).conj())
        np.testing.assert_allclose(toep(u).dense(), expected, atol=1e-12)

    def test_imaginary_diagonal(self):
        with pytest.raises(NotHermitianError):
            toep([1 + 1e-6j, 0])
        # below tolerance the imaginary part is dropped
        assert toep([1 + 1e-14j, 0]).u[0].imag == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            toep([])

    @given(st.integers(1, 12), st.integers(0, 2**31))
    @settings(max_examples=25)
    def test_hermitian_and_linear(self, n, seed):
        rng = make_rng(seed)
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        u[0], v[0] = u[0].real, v[0].real
        T = toep(u).dense()
        np.testing.assert_array_equal(T, T.conj().T)
        a, b = rng.standard_normal(2)
        np.testing.assert_allclose(toep(a * u + b * v).dense(), a * T + b * toep(v).dense(), atol=1e-12)

    @pytest.mark.parametrize("n", [1, 4, 17])
    def test_matvec(self, n):
        rng = make_rng(n)
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        u[0] = 1.0
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        T = toep(u)
        np.testing.assert_allclose(T.matvec(x), T.dense() @ x, atol=1e-12)
        assert T.trace() == pytest.approx(np.trace(T.dense()).real)

    def test_entry_convention(self):
        u = np.array([1.0, 2 + 1j, 3 - 2j])
        T = toep(u).dense()
        for i in range(3):
            for j in range(3):
                want = u[i - j] if i >= j else np.conj(u[j - i])
                assert T[i, j] == want


class TestToeplitzAdjoint:
    @pytest.mark.parametrize("seed", range(3))
    def test_diagonal_means_are_nearest_toeplitz(self, seed):
        """Brute-force least squares over the real basis of Hermitian Toeplitz matrices."""
        rng = make_rng(seed)
        n = 6
        M = random_hermitian(rng, n)
        basis = []
        for k in range(n):
            for part in ([1.0] if k == 0 else [1.0, 1j]):
                e = np.zeros(n, dtype=complex)
                e[k] = part
                basis.append(HermToeplitz(e).dense().ravel())
        Bm = np.array(basis).T
        coef = np.linalg.lstsq(np.vstack([Bm.real, Bm.imag]), np.concatenate([M.ravel().real, M.ravel().imag]), rcond=None)[0]
        best = (Bm @ coef).reshape(n, n)
        np.testing.assert_allclose(toep(diagonal_means(M)).dense(), best, atol=1e-12)

    def test_lower_diagonal_sums(self):
        M = np.arange(9, dtype=complex).reshape(3, 3)
        np.testing.assert_array_equal(toep_adjoint(M), [0 + 4 + 8, 3 + 7, 6])


class TestProjectPSD:
    def test_psd_unchanged(self):
        rng = make_rng(0)
        A = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        P = A @ A.conj().T
        np.testing.assert_allclose(project_psd(P), P, atol=1e-10)

    def test_diag(self):
        np.testing.assert_allclose(project_psd(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]), atol=1e-15)

    def test_negative_definite(self):
        np.testing.assert_array_equal(project_psd(-np.eye(3)), np.zeros((3, 3)))

    @pytest.mark.parametrize("seed", range(3))
    def test_nearest_point_sampled(self, seed):
        rng = make_rng(seed)
        M = random_hermitian(rng, 12)
        P = project_psd(M)
        assert np.linalg.eigvalsh(P).min() >= -1e-10
        d = np.linalg.norm(P - M)
        for _ in range(100):
            A = rng.standard_normal((12, rng.integers(1, 13))) + 1j * rng.standard_normal((12, 1))
            Q = A @ A.conj().T * rng.uniform(0.01, 2)
            assert d <= np.linalg.norm(Q - M) + 1e-12
        # perturbing along PSD-preserving directions never helps either
        for _ in range(50):
            v = rng.standard_normal(12) + 1j * rng.standard_normal(12)
            Q = P + rng.uniform(0, 0.1) * np.outer(v, v.conj())
            assert d <= np.linalg.norm(Q - M) + 1e-12

    @given(st.integers(1, 10), st.integers(0, 2**31))
    @settings(max_examples=25)
    def test_idempotent(self, n, seed):
        M = random_hermitian(make_rng(seed), n)
        P = project_psd(M)
        np.testing.assert_allclose(project_psd(P), P, atol=1e-10)

    def test_symmetrizes(self):
        M = np.array([[1.0, 2.0], [0.0, 1.0]])
        P = project_psd(M)
        np.testing.assert_allclose(P, P.conj().T)


class TestVandermonde:
    def test_single_atom(self):
        dec = vandermonde_decompose(3 * atom(0.2, 5))
        assert dec.rank == 1
        assert dec.taus[0] == pytest.approx(0.2, abs=1e-8)
        assert dec.magnitudes[0] == pytest.approx(3, abs=1e-8)
        assert dec.norm == pytest.approx(3, abs=1e-8)

    def test_identity_full_rank(self):
        with pytest.raises(NoDecompositionError):
            vandermonde_decompose([1, 0, 0, 0])

    def test_not_psd(self):
        u = atom(0.1, 6) - 0.5 * atom(0.6, 6)
        with pytest.raises(NotPSDError):
            vandermonde_decompose(u)

    def test_zero(self):
        assert vandermonde_decompose(np.zeros(4)).rank == 0

    @pytest.mark.parametrize("seed", range(10))
    def test_roundtrip_r4(self, seed):
        rng = make_rng(seed)
        taus = random_separated_taus(4, 1 / 16, rng)
        mags = rng.uniform(0.5, 2.0, 4)
        dec = vandermonde_decompose(first_column(taus, mags, 16))
        np.testing.assert_allclose(dec.taus, taus, atol=1e-8)
        np.testing.assert_allclose(dec.magnitudes, mags, atol=1e-8)
        u = first_column(taus, mags, 16)
        assert dec.residual <= 10 * 1e-8
        np.testing.assert_allclose(dec.reconstruct(16), toep(u).dense(), atol=1e-8 * np.linalg.norm(toep(u).dense()))

    @pytest.mark.parametrize("seed", range(10))
    def test_trace_identity(self, seed):
        rng = make_rng(100 + seed)
        r = int(rng.integers(1, 7))
        taus = random_separated_taus(r, 1 / 12, rng)
        u = first_column(taus, rng.uniform(0.2, 3, r), 12)
        dec = vandermonde_decompose(u)
        assert dec.norm == pytest.approx(toep(u).trace() / 12, abs=1e-8)

    @given(st.integers(1, 7), st.integers(0, 2**31))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_property(self, r, seed):
        n = 16
        rng = make_rng(seed)
        taus = random_separated_taus(r, 1 / n, rng)
        mags = rng.uniform(0.1, 5.0, r)
        dec = vandermonde_decompose(first_column(taus, mags, n))
        assert dec.rank == r
        d = np.mod(dec.taus - taus + 0.5, 1.0) - 0.5
        assert np.max(np.abs(d)) <= 1e-6
        np.testing.assert_allclose(dec.magnitudes, mags, atol=1e-6 * mags.max())

    def test_wraparound_cluster(self):
        taus = np.array([0.0, 0.5])
        dec = vandermonde_decompose(first_column(taus, [1.0, 2.0], 8))
        np.testing.assert_allclose(np.sort(dec.taus), taus, atol=1e-10)
