"""Dual polynomial evaluation, support localization and certificate checks.

The dual polynomial of ``p`` is ``P(tau) = <a(tau), p> = sum_l p_l exp(-j 2 pi l tau)``.
For a multi-snapshot dual (an ``n x T`` matrix) each column gives one
polynomial and the localization statistic is the row norm ``||P(tau)||_2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .signal import DomainError, NoisyObservation, SpikeSignal, atoms, min_separation, wrap_distance

DEFAULT_GRID = 2**14
DEFAULT_EPSILON = 1e-4
NEWTON_STEPS = 50
NEWTON_TOL = 1e-12


class ConditioningError(ValueError):
    pass


class DualPolySamples(NamedTuple):
    taus: np.ndarray
    values: np.ndarray  # grid x T (T = 1 for a single snapshot)

    @property
    def modulus(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)


def _as_matrix(p) -> np.ndarray:
    p = np.asarray(p, dtype=complex)
    return p[:, None] if p.ndim == 1 else p


def eval_dual_poly(p, grid_size: int = DEFAULT_GRID) -> DualPolySamples:
    """Samples of ``P`` at ``q / grid_size`` via a zero-padded FFT."""
    P = _as_matrix(p)
    n = P.shape[0]
    if grid_size < n:
        raise DomainError("grid_size must be at least the length of p")
    vals = np.fft.fft(P, grid_size, axis=0)
    return DualPolySamples(np.arange(grid_size) / grid_size, vals)


def dual_poly_at(p, taus, order: int = 0) -> np.ndarray:
    """Direct evaluation of the ``order``-th derivative of ``P`` at ``taus`` (shape ``len(taus) x T``)."""
    P = _as_matrix(p)
    n = P.shape[0]
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    ell = np.arange(n)
    E = np.exp(-2j * np.pi * np.outer(taus, ell)) * (-2j * np.pi * ell) ** order
    return E @ P


def _refine_peak(P: np.ndarray, tau: float, max_step: float) -> float:
    t = tau
    for _ in range(NEWTON_STEPS):
        v0, v1, v2 = (dual_poly_at(P, t, k)[0] for k in range(3))
        d1 = 2 * np.real(np.vdot(v0, v1))
        d2 = 2 * (np.real(np.vdot(v1, v1)) + np.real(np.vdot(v0, v2)))
        if abs(d1) <= NEWTON_TOL:
            break
        if d2 >= 0:
            # not locally concave; fall back to a bounded ascent step
            step = np.sign(d1) * max_step * 0.1
        else:
            step = -d1 / d2
        step = float(np.clip(step, -max_step, max_step))
        t = t + step
        if abs(step) < 1e-15:
            break
    return float(np.mod(t, 1.0))


def _local_maxima(mod: np.ndarray) -> np.ndarray:
    prev = np.roll(mod, 1)
    nxt = np.roll(mod, -1)
    return np.flatnonzero((mod >= prev) & (mod > nxt))


def _merge(taus: np.ndarray, scores: np.ndarray, radius: float) -> np.ndarray:
    order = np.argsort(-scores)
    kept: list[float] = []
    for i in order:
        if all(wrap_distance(taus[i], k) > radius for k in kept):
            kept.append(float(taus[i]))
    return np.sort(np.array(kept))


def localize_support(
    p,
    epsilon: float = DEFAULT_EPSILON,
    refine: bool = True,
    grid_size: int = DEFAULT_GRID,
) -> np.ndarray:
    """Locations where ``|P|`` reaches (within ``epsilon``) its unit bound."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    P = _as_matrix(p)
    n = P.shape[0]
    samples = eval_dual_poly(P, max(grid_size, n))
    mod = samples.modulus
    idx = _local_maxima(mod)
    idx = idx[mod[idx] >= 1 - epsilon]
    if len(idx) == 0:
        return np.zeros(0)
    cell = 1.0 / len(mod)
    taus = samples.taus[idx]
    if refine:
        taus = np.array([_refine_peak(P, t, 2 * cell) for t in taus])
        scores = np.linalg.norm(dual_poly_at(P, taus), axis=1)
        keep = scores >= 1 - epsilon
        taus, scores = taus[keep], scores[keep]
    else:
        scores = mod[idx]
    return _merge(taus, scores, 0.1 / n)


@dataclass
class CertificateReport:
    ok: bool
    interpolation_errors: np.ndarray
    sup_off_support: float
    worst_tau: float = np.nan
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok


def certify(p, signal: SpikeSignal, tol: float, grid_size: int = DEFAULT_GRID) -> CertificateReport:
    """Check that ``P`` interpolates the spike signs and stays within ``1 + tol`` off the support."""
    if tol <= 0:
        raise DomainError("tol must be positive")
    p = np.asarray(p, dtype=complex)
    if p.ndim != 1:
        raise DomainError("certify expects a single-snapshot dual vector")
    n = len(p)
    if signal.r:
        sgn = signal.amps / np.where(np.abs(signal.amps) > 0, np.abs(signal.amps), 1.0)
        interp = np.abs(dual_poly_at(p, signal.taus)[:, 0] - sgn)
    else:
        interp = np.zeros(0)
    samples = eval_dual_poly(p, grid_size)
    mod = samples.modulus
    radius = 0.1 / n
    if signal.r:
        near = np.min(wrap_distance(samples.taus[:, None], signal.taus[None, :]), axis=1) <= radius
    else:
        near = np.zeros(len(mod), dtype=bool)
    off = np.where(near, -np.inf, mod)
    worst_idx = int(np.argmax(off))
    sup_off = float(off[worst_idx])
    worst_tau = float(samples.taus[worst_idx])
    cell = 1.0 / grid_size
    # refine the near-extremal off-support peaks; grid sampling can miss the true maximum
    cand = _local_maxima(mod)
    cand = cand[(~near[cand]) & (mod[cand] >= max(sup_off, 0) - 1e-2)]
    for i in cand:
        t = _refine_peak(p[:, None], samples.taus[i], 2 * cell)
        if signal.r and np.min(wrap_distance(t, signal.taus)) <= radius:
            continue
        v = float(np.abs(dual_poly_at(p, t)[0, 0]))
        if v > sup_off:
            sup_off, worst_tau = v, t
    ok = bool(np.all(interp <= tol) and sup_off <= 1 + tol)
    return CertificateReport(ok, interp, sup_off, worst_tau)


def amplitudes_ls(z, taus: Sequence[float]) -> SpikeSignal:
    """Least-squares amplitudes of spikes at fixed ``taus``."""
    zv = np.asarray(z.data if isinstance(z, NoisyObservation) else z, dtype=complex)
    taus = np.mod(np.atleast_1d(np.asarray(taus, dtype=float)), 1.0)
    if len(taus) == 0:
        return SpikeSignal()
    n = len(zv)
    if len(taus) > n:
        raise ConditioningError("more spikes than samples")
    if min_separation(taus) < 1e-10:
        raise ConditioningError("spike locations are numerically coincident")
    A = atoms(taus, n)
    c, _, rank, _ = np.linalg.lstsq(A, zv, rcond=None)
    if rank < len(taus):
        raise ConditioningError("Vandermonde system is rank deficient")
    return SpikeSignal(taus, c)
