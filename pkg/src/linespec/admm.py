"""ADMM for atomic norm denoising over the Toeplitz-PSD characterization.

Solves

    min_{X, u, W}  1/2 ||X - Z||_F^2 + lam/2 (u_0 + tr W)
    s.t.           S = [[toep(u), X], [X^H, W]],  S >= 0

by alternating closed-form updates of ``(X, u, W)``, a PSD projection of ``S``
and a dual ascent step on the multiplier ``Sigma``. A single snapshot is the
``T = 1`` case with ``W = t``. Holding ``X`` fixed and dropping the data term
(with ``lam = 1``) evaluates the atomic norm itself.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .signal import DomainError, NoisyObservation
from .toeplitz import (
    VandermondeDecomposition,
    diagonal_means,
    hermitian_part,
    project_psd,
    toep,
    vandermonde_decompose,
)


@dataclass
class AdmmOptions:
    rho: Optional[float] = None  # None -> 2 * lam
    tol_abs: float = 1e-6
    tol_rel: float = 1e-5
    max_iter: int = 50_000
    adaptive_rho: bool = True
    rho_ratio: float = 10.0
    # relative eigenvalue threshold used when decomposing the solver's toep(u)
    decomposition_tol: float = 1e-4

    @classmethod
    def from_dict(cls, d: dict | None) -> "AdmmOptions":
        if not d:
            return cls()
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdmmState:
    X: np.ndarray  # n x T
    u: np.ndarray
    W: np.ndarray  # T x T
    S: np.ndarray
    Sigma: np.ndarray
    rho: float
    iteration: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.X[:, 0]

    @property
    def t(self) -> float:
        return float(self.W[0, 0].real)

    def structured(self) -> np.ndarray:
        return assemble(self.u, self.X, self.W)


def exact_norm_options() -> AdmmOptions:
    """Defaults for :func:`atomic_norm_exact`; its dual is only as accurate as the multiplier, so stop later."""
    return AdmmOptions(tol_abs=1e-8, tol_rel=1e-7)


@dataclass
class SolveReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    wall_time: float
    converged: bool
    rho: float
    options: dict = field(default_factory=dict)


class DenoiseResult(NamedTuple):
    x_hat: np.ndarray
    u_hat: np.ndarray
    t_hat: float
    report: SolveReport


class MmvDenoiseResult(NamedTuple):
    X_hat: np.ndarray
    u_hat: np.ndarray
    W_hat: np.ndarray
    report: SolveReport


class AtomicNormResult(NamedTuple):
    value: float
    decomposition: Optional[VandermondeDecomposition]
    dual: np.ndarray
    report: SolveReport


def assemble(u: np.ndarray, X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """The structured matrix ``[[toep(u), X], [X^H, W]]``."""
    n, T = X.shape
    M = np.empty((n + T, n + T), dtype=complex)
    M[:n, :n] = toep(u).dense()
    M[:n, n:] = X
    M[n:, :n] = X.conj().T
    M[n:, n:] = W
    return M


def augmented_lagrangian(X, u, W, S, Sigma, Z, lam: float, rho: float, fixed_x: bool = False) -> float:
    """Value of the augmented Lagrangian; ``Z`` is ignored when ``fixed_x``."""
    X = np.asarray(X, dtype=complex).reshape(len(u), -1)
    W = np.atleast_2d(W)
    D = S - assemble(u, X, W)
    data = 0.0 if fixed_x else 0.5 * np.linalg.norm(X - np.asarray(Z).reshape(X.shape)) ** 2
    reg = 0.5 * lam * (u[0].real + np.trace(W).real)
    return float(data + reg + np.real(np.vdot(Sigma, D)) + 0.5 * rho * np.linalg.norm(D) ** 2)


def _block_update(state: AdmmState, Z: Optional[np.ndarray], lam: float) -> None:
    n = state.n
    rho = state.rho
    Q = state.S + state.Sigma / rho
    if Z is not None:
        state.X = (Z + 2 * rho * Q[:n, n:]) / (1 + 2 * rho)
    state.W = hermitian_part(Q[n:, n:]) - lam / (2 * rho) * np.eye(Q.shape[0] - n)
    u = diagonal_means(hermitian_part(Q[:n, :n]))
    u[0] = u[0].real - lam / (2 * rho * n)
    state.u = u


def _objective(state: AdmmState, Z: Optional[np.ndarray], lam: float) -> float:
    reg = 0.5 * lam * (state.u[0].real + np.trace(state.W).real)
    if Z is None:
        return float(reg)
    return float(0.5 * np.linalg.norm(state.X - Z) ** 2 + reg)


def _run(
    Z: Optional[np.ndarray],
    X0: np.ndarray,
    lam: float,
    opts: AdmmOptions,
    callback: Optional[Callable[[str, AdmmState], None]] = None,
) -> tuple[AdmmState, SolveReport]:
    n, T = X0.shape
    rho = opts.rho if opts.rho is not None else 2.0 * lam
    if rho <= 0:
        raise DomainError("rho must be positive")
    dim = n + T
    state = AdmmState(
        X=X0.astype(complex).copy(),
        u=np.zeros(n, dtype=complex),
        W=np.zeros((T, T), dtype=complex),
        S=np.zeros((dim, dim), dtype=complex),
        Sigma=np.zeros((dim, dim), dtype=complex),
        rho=rho,
    )
    start = time.perf_counter()
    converged = False
    for it in range(1, opts.max_iter + 1):
        _block_update(state, Z, lam)
        if callback is not None:
            callback("blocks", state)
        M = state.structured()
        S_old = state.S
        state.S = project_psd(M - state.Sigma / state.rho)
        if callback is not None:
            callback("project", state)
        D = state.S - M
        state.Sigma = state.Sigma + state.rho * D
        state.iteration = it
        state.primal_residual = float(np.linalg.norm(D))
        state.dual_residual = float(state.rho * np.linalg.norm(state.S - S_old))
        if callback is not None:
            callback("dual", state)
        scale = max(np.linalg.norm(state.S), np.linalg.norm(M))
        tol = opts.tol_abs + opts.tol_rel * scale
        if state.primal_residual <= tol and state.dual_residual <= tol:
            converged = True
            break
        if opts.adaptive_rho:
            if state.primal_residual > opts.rho_ratio * state.dual_residual:
                state.rho *= 2.0
            elif state.dual_residual > opts.rho_ratio * state.primal_residual:
                state.rho /= 2.0
    report = SolveReport(
        iterations=state.iteration,
        primal_residual=state.primal_residual,
        dual_residual=state.dual_residual,
        objective=_objective(state, Z, lam),
        wall_time=time.perf_counter() - start,
        converged=converged,
        rho=state.rho,
        options=opts.to_dict(),
    )
    return state, report


def _as_vector(z) -> np.ndarray:
    if isinstance(z, NoisyObservation):
        return np.asarray(z.data)
    return np.asarray(z, dtype=complex)


def denoise(
    z,
    lam: float,
    opts: Optional[AdmmOptions] = None,
    callback: Optional[Callable[[str, AdmmState], None]] = None,
) -> DenoiseResult:
    """Atomic norm denoising ``min 1/2 ||x - z||^2 + lam ||x||_A``.

    ``callback(stage, state)`` is invoked after each of the ``"blocks"``,
    ``"project"`` and ``"dual"`` stages of every iteration; the state is live
    and must not be modified.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    opts = opts or AdmmOptions()
    zv = _as_vector(z)
    Z = zv[:, None]
    state, report = _run(Z, np.zeros_like(Z), lam, opts, callback)
    return DenoiseResult(state.x.copy(), state.u.copy(), state.t, report)


def mmv_denoise(
    Z,
    lam: float,
    opts: Optional[AdmmOptions] = None,
    callback: Optional[Callable[[str, AdmmState], None]] = None,
) -> MmvDenoiseResult:
    """Joint denoising of the columns of ``Z`` (snapshots sharing one support)."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    Z = np.asarray(Z, dtype=complex)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[1] < 1:
        raise DomainError("need at least one snapshot")
    opts = opts or AdmmOptions()
    state, report = _run(Z, np.zeros_like(Z), lam, opts, callback)
    return MmvDenoiseResult(state.X.copy(), state.u.copy(), state.W.copy(), report)


def _exact(X: np.ndarray, opts: AdmmOptions, callback) -> tuple[float, Optional[VandermondeDecomposition], np.ndarray, SolveReport]:
    n = X.shape[0]
    if not np.any(X):
        report = SolveReport(0, 0.0, 0.0, 0.0, 0.0, True, 0.0, opts.to_dict())
        return 0.0, VandermondeDecomposition(np.zeros(0), np.zeros(0)), np.zeros_like(X), report
    state, report = _run(None, X, 1.0, opts, callback)
    value = 0.5 * (state.u[0].real + np.trace(state.W).real)
    dual = -2.0 * state.Sigma[:n, n:]
    try:
        dec = vandermonde_decompose(state.u, opts.decomposition_tol)
    except ValueError:
        dec = None
    return float(value), dec, dual, report


def atomic_norm_exact(
    x,
    opts: Optional[AdmmOptions] = None,
    callback: Optional[Callable[[str, AdmmState], None]] = None,
) -> AtomicNormResult:
    """Atomic norm of ``x`` from the Toeplitz-PSD program with ``x`` held fixed.

    Returns the value, the Vandermonde decomposition of the optimal ``toep(u)``
    (``None`` if it is numerically full rank), the dual vector read off the
    multiplier, and the solver report.
    """
    opts = opts or exact_norm_options()
    X = _as_vector(x)[:, None]
    value, dec, dual, report = _exact(X, opts, callback)
    return AtomicNormResult(value, dec, dual[:, 0], report)


def mmv_atomic_norm_exact(X, opts: Optional[AdmmOptions] = None, callback=None) -> AtomicNormResult:
    """Multi-snapshot analogue of :func:`atomic_norm_exact`; the dual is an ``n x T`` matrix."""
    opts = opts or exact_norm_options()
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    return AtomicNormResult(*_exact(X, opts, callback))


def extract_dual(z, x_hat, lam: float) -> np.ndarray:
    """Dual vector ``(z - x_hat) / lam`` from first-order optimality of the denoising problem."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    zv = z.data if isinstance(z, NoisyObservation) else z
    return (np.asarray(zv, dtype=complex) - np.asarray(x_hat, dtype=complex)) / lam


def lambda_rule(sigma: float, n: int, eta: float = 1.2) -> float:
    """Regularization ``eta * sigma * sqrt(n log n)``."""
    return float(eta * sigma * np.sqrt(n * np.log(n)))
