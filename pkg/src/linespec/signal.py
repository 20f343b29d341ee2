"""Spectral atoms, spike signals, observation synthesis and spike-matching metrics.

Moments are indexed ``0..n-1``; the atom for a spike at ``tau`` is
``a(tau)[l] = exp(j 2 pi l tau)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

PSF_TOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class SingularPSFError(ValueError):
    """A PSF sample is too close to zero to be inverted."""


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; streams replay bit-identically across platforms."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpikeSignal:
    """Point masses ``sum_k amps[k] * delta(t - taus[k])`` on the unit torus."""

    taus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    amps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        taus = np.atleast_1d(np.asarray(self.taus, dtype=float))
        amps = np.atleast_1d(np.asarray(self.amps, dtype=complex))
        if taus.shape != amps.shape or taus.ndim != 1:
            raise DomainError("taus and amps must be 1-d arrays of equal length")
        if np.any(taus < 0) or np.any(taus >= 1) or not np.all(np.isfinite(taus)):
            raise DomainError("spike locations must lie in [0, 1)")
        if len(np.unique(taus)) != len(taus):
            raise DomainError("spike locations must be pairwise distinct")
        object.__setattr__(self, "taus", _frozen(taus))
        object.__setattr__(self, "amps", _frozen(amps))

    @property
    def r(self) -> int:
        return len(self.taus)

    def __len__(self):
        return self.r

    def sorted(self) -> "SpikeSignal":
        order = np.argsort(self.taus)
        return SpikeSignal(self.taus[order], self.amps[order])

    def to_dict(self) -> list[dict]:
        return [
            {"tau": float(t), "re": float(c.real), "im": float(c.imag)}
            for t, c in zip(self.taus, self.amps)
        ]

    @classmethod
    def from_dict(cls, items: Sequence[dict]) -> "SpikeSignal":
        taus = [d["tau"] for d in items]
        amps = [complex(d["re"], d["im"]) for d in items]
        return cls(np.array(taus, dtype=float), np.array(amps, dtype=complex))


@dataclass(frozen=True)
class NoisyObservation:
    """Equalized observation ``z = x + noise`` with per-entry complex noise variance ``sigma**2``."""

    data: np.ndarray
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        data = np.atleast_1d(np.asarray(self.data, dtype=complex))
        if data.ndim != 1 or len(data) < 1:
            raise DomainError("observation must be a non-empty vector")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return len(self.data)

    def to_dict(self) -> dict:
        inter = np.empty(2 * self.n)
        inter[0::2] = self.data.real
        inter[1::2] = self.data.imag
        return {
            "n": self.n,
            "sigma": float(self.sigma),
            "seed": int(self.seed),
            "data": inter.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoisyObservation":
        inter = np.asarray(d["data"], dtype=float)
        if len(inter) != 2 * d["n"]:
            raise DomainError("interleaved data length does not match n")
        return cls(inter[0::2] + 1j * inter[1::2], float(d["sigma"]), int(d["seed"]))


@dataclass(frozen=True)
class PsfSpectrum:
    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", _frozen(np.asarray(self.g, dtype=complex)))


@dataclass
class MatchReport:
    pairs: list[tuple[int, int, float]]
    misses: list[int]
    false_alarms: list[int]
    location_mse: float
    amplitude_mse: float

    @property
    def n_matched(self) -> int:
        return len(self.pairs)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if not np.all((tau >= 0) & (tau < 1)):
        raise DomainError(f"tau must lie in [0, 1), got {tau}")
    return tau


def atom(tau: float, n: int) -> np.ndarray:
    """Moment vector of a unit spike at ``tau``; has Euclidean norm ``sqrt(n)``."""
    if n < 1:
        raise DomainError("n must be positive")
    tau = float(_check_tau(tau))
    return np.exp(2j * np.pi * tau * np.arange(n))


def atom_derivative(tau: float, n: int) -> np.ndarray:
    """Derivative of :func:`atom` with respect to ``tau``."""
    if n < 1:
        raise DomainError("n must be positive")
    tau = float(_check_tau(tau))
    ell = np.arange(n)
    return 2j * np.pi * ell * np.exp(2j * np.pi * tau * ell)


def atoms(taus, n: int) -> np.ndarray:
    """Matrix whose columns are ``atom(tau_k, n)``; taus are wrapped into [0, 1)."""
    taus = np.mod(np.atleast_1d(np.asarray(taus, dtype=float)), 1.0)
    return np.exp(2j * np.pi * np.outer(np.arange(n), taus))


def atoms_derivative(taus, n: int) -> np.ndarray:
    ell = np.arange(n)[:, None]
    return 2j * np.pi * ell * atoms(taus, n)


def synthesize(signal: SpikeSignal, n: int) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be positive")
    if signal.r == 0:
        return np.zeros(n, dtype=complex)
    return atoms(signal.taus, n) @ signal.amps


def complex_noise(n: int, seed: int) -> np.ndarray:
    """Unit-variance circular complex Gaussian vector drawn from the seeded Philox stream."""
    g = make_rng(seed).standard_normal((n, 2))
    return (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2.0)


def add_noise(x: np.ndarray, sigma: float, seed: int) -> NoisyObservation:
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    x = np.asarray(x, dtype=complex)
    if sigma == 0:
        return NoisyObservation(x.copy(), 0.0, seed)
    return NoisyObservation(x + sigma * complex_noise(len(x), seed), float(sigma), seed)


def equalize(y: np.ndarray, g: PsfSpectrum, sigma: float = 0.0, seed: int = 0) -> NoisyObservation:
    """Divide out the PSF spectrum entrywise."""
    y = np.asarray(y, dtype=complex)
    if len(y) != len(g.g):
        raise DomainError("PSF length does not match the observation")
    if np.any(np.abs(g.g) < PSF_TOL):
        raise SingularPSFError("PSF spectrum has a (near-)zero sample")
    return NoisyObservation(y / g.g, sigma, seed)


def wrap_distance(a, b) -> np.ndarray:
    d = np.mod(np.asarray(a) - np.asarray(b), 1.0)
    return np.minimum(d, 1.0 - d)


def min_separation(signal: SpikeSignal | Sequence[float]) -> float:
    """Smallest wrap-around distance between distinct spikes; ``inf`` for fewer than two."""
    taus = signal.taus if isinstance(signal, SpikeSignal) else np.asarray(signal, dtype=float)
    if len(taus) < 2:
        return np.inf
    t = np.sort(np.mod(taus, 1.0))
    gaps = np.diff(t)
    return float(min(gaps.min(), 1.0 - (t[-1] - t[0])))


def random_separated_taus(r: int, min_sep: float, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random support of ``r`` points on the torus with separation at least ``min_sep``.

    Samples the free gap mass uniformly and rotates by a random offset, which
    is exact (no rejection loop).
    """
    if r == 0:
        return np.zeros(0)
    slack = 1.0 - r * min_sep
    if slack < 0:
        raise DomainError(f"cannot place {r} spikes with separation {min_sep}")
    pts = np.sort(rng.uniform(0.0, slack, r))
    taus = pts - pts[0] + np.arange(r) * min_sep + rng.uniform()
    return np.sort(np.mod(taus, 1.0))


def match_spikes(truth: SpikeSignal, est: SpikeSignal, radius: float) -> MatchReport:
    """Minimum-cost assignment on wrap-around distance; pairs farther than ``radius`` are unmatched."""
    if radius <= 0:
        raise DomainError("radius must be positive")
    if truth.r == 0 or est.r == 0:
        return MatchReport([], list(range(truth.r)), list(range(est.r)), np.nan, np.nan)
    d = wrap_distance(truth.taus[:, None], est.taus[None, :])
    # out-of-radius edges cost more than any in-radius matching, so the count of matches is maximized first
    big = 1.0 + truth.r
    cost = np.where(d <= radius, d, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(i), int(j), float(d[i, j])) for i, j in zip(rows, cols) if d[i, j] <= radius]
    pairs.sort()
    mt = {i for i, _, _ in pairs}
    me = {j for _, j, _ in pairs}
    misses = [i for i in range(truth.r) if i not in mt]
    fas = [j for j in range(est.r) if j not in me]
    if pairs:
        loc = float(np.mean([p[2] ** 2 for p in pairs]))
        amp = float(np.mean([abs(truth.amps[i] - est.amps[j]) ** 2 for i, j, _ in pairs]))
    else:
        loc = amp = np.nan
    return MatchReport(pairs, misses, fas, loc, amp)
