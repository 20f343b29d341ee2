"""Hermitian Toeplitz matrices, PSD projection and Vandermonde decomposition."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.optimize import nnls

from .signal import atoms

HERMITIAN_TOL = 1e-12
CLUSTER_TOL = 1e-7


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


class NoDecompositionError(ValueError):
    """The Toeplitz matrix has full numerical rank, so no Vandermonde decomposition with r < n exists."""


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class HermToeplitz:
    """Hermitian Toeplitz matrix given by its first column ``u``."""

    u: np.ndarray

    @property
    def n(self) -> int:
        return len(self.u)

    def dense(self) -> np.ndarray:
        return scipy.linalg.toeplitz(self.u, self.u.conj())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return scipy.linalg.matmul_toeplitz((self.u, self.u.conj()), np.asarray(v, dtype=complex))

    def trace(self) -> float:
        return float(self.n * self.u[0].real)


def toep(u) -> HermToeplitz:
    u = np.array(np.atleast_1d(u), dtype=complex)
    if u.ndim != 1 or len(u) < 1:
        raise ValueError("u must be a non-empty vector")
    if abs(u[0].imag) > HERMITIAN_TOL:
        raise NotHermitianError(f"u[0] must be real, got imaginary part {u[0].imag:g}")
    u[0] = u[0].real
    u.setflags(write=False)
    return HermToeplitz(u)


@lru_cache(maxsize=32)
def _lower_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.tril_indices(n)
    return i * n + j, i - j


def toep_adjoint(M: np.ndarray) -> np.ndarray:
    """Sums of the lower diagonals of ``M``: the adjoint of ``u -> toep(u)`` restricted to the lower triangle."""
    n = M.shape[0]
    flat, diag = _lower_index(n)
    vals = M.reshape(-1)[flat]
    return np.bincount(diag, vals.real, n) + 1j * np.bincount(diag, vals.imag, n)


def diagonal_means(M: np.ndarray) -> np.ndarray:
    """Mean of each lower diagonal of a Hermitian matrix (Frobenius-nearest Toeplitz first column)."""
    n = M.shape[0]
    return toep_adjoint(M) / (n - np.arange(n))


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def project_psd(M: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero."""
    M = hermitian_part(np.asarray(M, dtype=complex))
    try:
        # only the positive part is needed; the iterates of the solvers are typically low rank
        w, V = scipy.linalg.eigh(M, driver="evr", subset_by_value=(0.0, np.inf), check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("eigendecomposition failed") from exc
    if len(w) == M.shape[0]:
        return M
    if len(w) == 0:
        return np.zeros_like(M)
    return hermitian_part((V * w) @ V.conj().T)


@dataclass(frozen=True)
class VandermondeDecomposition:
    """``toep(u) = sum_k magnitudes[k] a(taus[k]) a(taus[k])^H``."""

    taus: np.ndarray
    magnitudes: np.ndarray
    residual: float = 0.0

    @property
    def rank(self) -> int:
        return len(self.taus)

    @property
    def norm(self) -> float:
        """Atomic norm value implied by the decomposition."""
        return float(np.sum(self.magnitudes))

    def reconstruct(self, n: int) -> np.ndarray:
        A = atoms(self.taus, n)
        return (A * self.magnitudes) @ A.conj().T


def _esprit_roots(Us: np.ndarray) -> np.ndarray:
    # signal subspace is spanned by Vandermonde columns; shifting rows multiplies each by exp(j 2 pi tau)
    Phi = np.linalg.lstsq(Us[:-1], Us[1:], rcond=None)[0]
    return np.linalg.eigvals(Phi)


def _merge_close(taus: np.ndarray, weights: np.ndarray, tol: float) -> np.ndarray:
    order = np.argsort(taus)
    taus, weights = taus[order], weights[order]
    groups: list[list[int]] = [[0]]
    for i in range(1, len(taus)):
        if taus[i] - taus[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    # wrap-around between last and first group
    if len(groups) > 1 and taus[groups[0][0]] + 1.0 - taus[groups[-1][-1]] <= tol:
        last = groups.pop()
        merged = []
        for g in (last, groups[0]):
            merged.extend(g)
        groups[0] = merged
    out = []
    for g in groups:
        t = taus[g]
        t = np.where(t - t[0] > 0.5, t - 1.0, t)
        t = np.where(t[0] - t > 0.5, t + 1.0, t)
        w = weights[g] if weights[g].sum() > 0 else np.ones(len(g))
        out.append(np.mod(np.average(t, weights=w), 1.0))
    return np.sort(np.array(out))


def vandermonde_decompose(u, rank_tol: float = 1e-8) -> VandermondeDecomposition:
    """Carathéodory–Fejér–Pisarenko decomposition of a rank-deficient PSD Toeplitz matrix.

    Eigenvalues at or below ``rank_tol * lambda_max`` count as the null space.
    Frequencies come from the rotational invariance of the signal subspace,
    magnitudes from nonnegative least squares on the first column.
    """
    T = toep(u)
    n = T.n
    w, V = np.linalg.eigh(T.dense())
    lam_max = w[-1]
    if lam_max <= 0:
        if w[0] < -HERMITIAN_TOL:
            raise NotPSDError("Toeplitz matrix is negative definite")
        return VandermondeDecomposition(np.zeros(0), np.zeros(0), 0.0)
    if w[0] < -rank_tol * lam_max:
        raise NotPSDError(f"eigenvalue {w[0]:g} is below -rank_tol * lambda_max")
    signal = w > rank_tol * lam_max
    r = int(signal.sum())
    if r >= n:
        raise NoDecompositionError("Toeplitz matrix has full numerical rank")
    roots = _esprit_roots(V[:, signal])
    taus = np.mod(np.angle(roots) / (2 * np.pi), 1.0)
    taus = _merge_close(taus, np.ones(len(taus)), CLUSTER_TOL)
    A = atoms(taus, n)
    mags, _ = nnls(np.vstack([A.real, A.imag]), np.concatenate([T.u.real, T.u.imag]))
    keep = mags > 0
    taus, mags = taus[keep], mags[keep]
    dec = VandermondeDecomposition(taus, mags)
    resid = np.linalg.norm(T.dense() - dec.reconstruct(n)) / max(np.linalg.norm(T.dense()), 1e-300)
    return VandermondeDecomposition(taus, mags, float(resid))
