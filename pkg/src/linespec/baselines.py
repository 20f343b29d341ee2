"""Classical line-spectrum estimators and the Cramér–Rao bound.

All subspace methods act on the data Hankel matrix ``H[i, j] = z[i + j]`` of
size ``L x (n - L + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .localization import ConditioningError, amplitudes_ls
from .signal import DomainError, NoisyObservation, SpikeSignal, atoms, atoms_derivative, min_separation


@dataclass(frozen=True)
class HankelConfig:
    pencil: Optional[int] = None  # rows L; None -> n // 2

    def rows(self, n: int) -> int:
        return self.pencil if self.pencil is not None else n // 2

    def check(self, n: int, r: int) -> int:
        L = self.rows(n)
        if not 1 <= L <= n:
            raise DomainError(f"pencil {L} outside [1, {n}]")
        if r > min(L, n - L + 1) - 1:
            raise DomainError(f"model order {r} exceeds the Hankel rank budget min(L, n-L+1)-1")
        return L


@dataclass(frozen=True)
class CrbReport:
    tau: np.ndarray  # variance bounds for each location
    amp_real: np.ndarray
    amp_imag: np.ndarray
    fisher: np.ndarray


def _vec(z) -> np.ndarray:
    return np.asarray(z.data if isinstance(z, NoisyObservation) else z, dtype=complex)


def hankel(z, L: int) -> np.ndarray:
    z = _vec(z)
    return scipy.linalg.hankel(z[:L], z[L - 1 :])


def dehankel(H: np.ndarray) -> np.ndarray:
    """Average the anti-diagonals of ``H`` back into a vector."""
    L, K = H.shape
    n = L + K - 1
    out = np.zeros(n, dtype=complex)
    counts = np.zeros(n)
    i, j = np.indices(H.shape)
    np.add.at(out, (i + j).ravel(), H.ravel())
    np.add.at(counts, (i + j).ravel(), 1)
    return out / counts


def _roots_to_taus(roots: np.ndarray) -> np.ndarray:
    return np.sort(np.mod(np.angle(roots) / (2 * np.pi), 1.0))


def _fit(z: np.ndarray, taus: np.ndarray) -> SpikeSignal:
    try:
        return amplitudes_ls(z, taus)
    except (ConditioningError, ValueError):
        # coincident roots: keep one copy of each location
        taus = np.unique(np.round(taus, 12))
        return amplitudes_ls(z, taus)


def prony(z, r: int, cfg: HankelConfig = HankelConfig()) -> SpikeSignal:
    """Annihilating-filter (Prony) estimate of ``r`` spikes.

    The filter of length ``r + 1`` is the least-squares null vector of the
    ``(n - r) x (r + 1)`` Hankel system; its roots, projected onto the unit
    circle, give the locations.
    """
    zv = _vec(z)
    n = len(zv)
    if r < 0:
        raise DomainError("model order must be non-negative")
    if r == 0:
        return SpikeSignal()
    cfg.check(n, r)
    H = hankel(zv, n - r)
    _, _, Vh = np.linalg.svd(H)
    h = Vh[-1].conj()
    # sum_i h_i z[l + i] = 0  <=>  roots of sum_i h_i w^i are exp(j 2 pi tau)
    roots = np.roots(h[::-1])
    return _fit(zv, _roots_to_taus(roots))


def cadzow(z, r: int, iters: int = 30, cfg: HankelConfig = HankelConfig(), tol: float = 1e-10) -> np.ndarray:
    """Alternating projections between rank-``r`` matrices and Hankel structure."""
    zv = _vec(z).copy()
    n = len(zv)
    L = cfg.check(n, r)
    for _ in range(iters):
        U, s, Vh = np.linalg.svd(hankel(zv, L), full_matrices=False)
        low = (U[:, :r] * s[:r]) @ Vh[:r]
        new = dehankel(low)
        change = np.linalg.norm(new - zv)
        zv = new
        if change < tol * max(np.linalg.norm(zv), 1.0):
            break
    return zv


def root_music(z, r: int, cfg: HankelConfig = HankelConfig()) -> SpikeSignal:
    """Root-MUSIC on the data Hankel matrix."""
    zv = _vec(z)
    n = len(zv)
    L = cfg.rows(n)
    if L <= r:
        raise DomainError("pencil must exceed the model order")
    cfg.check(n, r)
    if r == 0:
        return SpikeSignal()
    U, _, _ = np.linalg.svd(hankel(zv, L))
    Un = U[:, r:]
    if Un.shape[1] == 0:
        raise DomainError("noise subspace is empty")
    C = Un @ Un.conj().T
    # D(w) = a(w)^H C a(w) = sum_m w^m sum_{k-i=m} C[i, k]; multiply by w^(L-1) for a polynomial
    coeffs = np.array([np.trace(C, offset=m) for m in range(L - 1, -L, -1)])
    roots = np.roots(coeffs)
    inside = roots[np.abs(roots) <= 1.0]
    if len(inside) < r:
        inside = roots[np.argsort(np.abs(np.abs(roots) - 1.0))]
    order = np.lexsort((np.angle(inside), -np.abs(inside)))
    chosen = inside[order[:r]]
    taus = np.array([_polish_null_spectrum(Un, t) for t in _roots_to_taus(chosen)])
    return _fit(zv, np.sort(taus))


def _polish_null_spectrum(Un: np.ndarray, tau: float, steps: int = 8) -> float:
    """Newton steps minimizing ``||Un^H a(tau)||^2`` on the unit circle.

    Noiseless data put double roots on the circle, which polynomial rooting
    only resolves to about the square root of machine precision.
    """
    L = Un.shape[0]
    ell = np.arange(L)
    t = tau
    for _ in range(steps):
        a = np.exp(2j * np.pi * ell * t)
        v0 = Un.conj().T @ a
        v1 = Un.conj().T @ (2j * np.pi * ell * a)
        v2 = Un.conj().T @ (-((2 * np.pi * ell) ** 2) * a)
        d1 = 2 * np.real(np.vdot(v0, v1))
        d2 = 2 * (np.real(np.vdot(v1, v1)) + np.real(np.vdot(v0, v2)))
        if d2 <= 0:
            break
        step = -d1 / d2
        if abs(step) > 0.5 / L:
            break
        t += step
        if abs(step) < 1e-15:
            break
    return float(np.mod(t, 1.0))


def fisher_information(signal: SpikeSignal, sigma: float, n: int) -> np.ndarray:
    """Fisher matrix for ``(tau_1..tau_r, Re c_1..Re c_r, Im c_1..Im c_r)``."""
    A = atoms(signal.taus, n)
    J = np.hstack([atoms_derivative(signal.taus, n) * signal.amps, A, 1j * A])
    return (2.0 / sigma**2) * np.real(J.conj().T @ J)


def crb(signal: SpikeSignal, sigma: float, n: int) -> CrbReport:
    """Cramér–Rao bounds for the deterministic sinusoid model in circular complex Gaussian noise."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    r = signal.r
    if r == 0:
        return CrbReport(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, 0)))
    if min_separation(signal) < 1e-12 or np.any(signal.amps == 0):
        raise ConditioningError("Fisher information is singular")
    F = fisher_information(signal, sigma, n)
    if np.linalg.cond(F) > 1e15:
        raise ConditioningError("Fisher information is singular")
    d = np.diag(np.linalg.inv(F))
    return CrbReport(d[:r].copy(), d[r : 2 * r].copy(), d[2 * r :].copy(), F)


def single_tone_crb(amp: complex, sigma: float, n: int) -> float:
    """Closed-form location bound ``6 sigma^2 / ((2 pi)^2 |c|^2 n (n^2 - 1))``."""
    return 6 * sigma**2 / ((2 * np.pi) ** 2 * abs(amp) ** 2 * n * (n**2 - 1))
