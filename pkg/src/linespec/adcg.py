"""Alternating descent conditional gradient over the continuous sinusoid dictionary.

Solves ``min loss(x)`` subject to ``||x||_A <= eta`` by greedily adding the atom
most correlated with the negative loss gradient, then alternating between a
constrained coefficient fit, pruning and local descent on the spike
locations. In ``nonnegative`` mode the dictionary is the (unphased) moment
curve and all coefficients are real and nonnegative.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np
from scipy.optimize import nnls

from .signal import SpikeSignal, atoms, atoms_derivative, wrap_distance

COMPLEX = "complex"
NONNEGATIVE = "nonnegative"


class LossModel(Protocol):
    n: int

    def forward(self, x: np.ndarray) -> np.ndarray: ...

    def adjoint(self, r: np.ndarray) -> np.ndarray: ...

    @property
    def target(self) -> np.ndarray: ...

    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class QuadraticLoss:
    """``1/2 ||x - z||^2``."""

    z: np.ndarray

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def target(self) -> np.ndarray:
        return self.z

    def forward(self, x):
        return np.asarray(x)

    def adjoint(self, r):
        return np.asarray(r)

    def value(self, x) -> float:
        return 0.5 * float(np.linalg.norm(np.asarray(x) - self.z) ** 2)

    def gradient(self, x) -> np.ndarray:
        return np.asarray(x, dtype=complex) - self.z


@dataclass(frozen=True)
class CompressedLoss:
    """``1/2 ||A x - y||^2`` for a measurement matrix ``A`` (m x n)."""

    A: np.ndarray
    y: np.ndarray

    @classmethod
    def from_indices(cls, indices, n: int, y) -> "CompressedLoss":
        """Partial observation of the entries ``indices`` of a length-``n`` moment vector."""
        A = np.eye(n, dtype=complex)[np.asarray(indices)]
        return cls(A, np.asarray(y, dtype=complex))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def target(self) -> np.ndarray:
        return self.y

    def forward(self, x):
        return self.A @ x

    def adjoint(self, r):
        return self.A.conj().T @ r

    def value(self, x) -> float:
        return 0.5 * float(np.linalg.norm(self.A @ x - self.y) ** 2)

    def gradient(self, x) -> np.ndarray:
        return self.A.conj().T @ (self.A @ np.asarray(x, dtype=complex) - self.y)


@dataclass
class AdcgConfig:
    eta: float
    grid_factor: int = 16
    max_outer: int = 40
    refine_iters: int = 20
    local_steps: int = 50
    sign_mode: str = COMPLEX
    tol: float = 1e-9
    coeff_max_iter: int = 20_000
    joint: bool = True

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if self.sign_mode not in (COMPLEX, NONNEGATIVE):
            raise ValueError(f"unknown sign_mode {self.sign_mode!r}")


@dataclass
class AdcgSolution:
    taus: np.ndarray
    coefficients: np.ndarray
    x: np.ndarray
    trace: list[float] = field(default_factory=list)
    coeff_converged: bool = True

    @property
    def signal(self) -> SpikeSignal:
        return SpikeSignal(self.taus, self.coefficients).sorted()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(self.trace):
            w.writerow([i, repr(v)])
        return buf.getvalue()


# -- atom selection ---------------------------------------------------------


def _score_derivs(g: np.ndarray, tau: float, sign_mode: str) -> tuple[float, float, float]:
    ell = np.arange(len(g))
    e = np.exp(-2j * np.pi * ell * tau)
    P0 = e @ g
    P1 = (-2j * np.pi * ell * e) @ g
    P2 = (-((2 * np.pi * ell) ** 2) * e) @ g
    if sign_mode == NONNEGATIVE:
        return -P0.real, -P1.real, -P2.real
    s = abs(P0) ** 2
    d1 = 2 * np.real(np.conj(P0) * P1)
    d2 = 2 * (abs(P1) ** 2 + np.real(np.conj(P0) * P2))
    return s, d1, d2


def _polish(g: np.ndarray, tau: float, sign_mode: str, max_step: float) -> tuple[float, float]:
    s, d1, d2 = _score_derivs(g, tau, sign_mode)
    for _ in range(60):
        step = -d1 / d2 if d2 < 0 else np.sign(d1) * max_step * 0.1
        step = float(np.clip(step, -max_step, max_step))
        cand = tau + step
        s_new, d1_new, d2_new = _score_derivs(g, cand, sign_mode)
        if s_new < s:
            # Newton overshoot on a non-concave stretch; shrink the step
            step *= 0.5
            if abs(step) < 1e-16:
                break
            max_step = abs(step)
            continue
        tau, s, d1, d2 = cand, s_new, d1_new, d2_new
        if abs(step) < 1e-14:
            break
    return float(np.mod(tau, 1.0)), float(s)


def select_atom(gradient, config: AdcgConfig, n_candidates: int = 5) -> Optional[float]:
    """Location of the atom most correlated with ``-gradient``; ``None`` when no atom helps.

    A coarse grid of ``grid_factor * n`` points seeds Newton polishing of the
    best few local maxima.
    """
    g = np.asarray(gradient, dtype=complex)
    n = len(g)
    if not np.any(np.abs(g) > 0):
        return None
    grid = config.grid_factor * n
    P = np.fft.fft(g, grid)
    score = -P.real if config.sign_mode == NONNEGATIVE else np.abs(P) ** 2
    peaks = np.flatnonzero((score >= np.roll(score, 1)) & (score >= np.roll(score, -1)))
    if len(peaks) == 0:
        peaks = np.array([int(np.argmax(score))])
    peaks = peaks[np.argsort(-score[peaks])][:n_candidates]
    best_tau, best_s = None, -np.inf
    for q in peaks:
        tau, s = _polish(g, q / grid, config.sign_mode, 1.0 / grid)
        if s > best_s:
            best_tau, best_s = tau, s
    if config.sign_mode == NONNEGATIVE and best_s <= 0:
        return None
    return best_tau


# -- coefficient update -----------------------------------------------------


def _project_simplex(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of a real vector onto ``{w >= 0, sum w = radius}``."""
    if radius <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, len(v) + 1)
    hits = np.flatnonzero(u - css / k > 0)
    # a radius below the rounding of the largest entry leaves no hit
    rho = k[hits[-1]] if len(hits) else 1
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def project_l1_ball(c: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto the complex l1 ball: shrink magnitudes onto the simplex, keep phases."""
    mag = np.abs(c)
    if mag.sum() <= radius:
        return c.copy()
    new = _project_simplex(mag, radius)
    phase = np.where(mag > 0, c / np.where(mag > 0, mag, 1.0), 0.0)
    return new * phase


def project_nonneg_ball(c: np.ndarray, radius: float) -> np.ndarray:
    """Projection onto ``{c real, c >= 0, sum c <= radius}``."""
    v = np.maximum(np.real(c), 0.0)
    if v.sum() <= radius:
        return v
    return _project_simplex(np.real(c), radius) if radius > 0 else np.zeros_like(v)


@dataclass
class CoefficientResult:
    c: np.ndarray
    kkt_residual: float
    converged: bool
    iterations: int


def _kkt(G, b, c, L, proj, radius):
    grad = G @ c - b
    return float(np.linalg.norm(c - proj(c - grad / L, radius)))


def _face_newton(B: np.ndarray, y: np.ndarray, c: np.ndarray, eta: float, nonneg: bool, iters: int = 40):
    """Newton-KKT iterations for ``min 1/2 ||Bc - y||^2`` on the face ``sum |c_i| = eta`` of the current support.

    Coordinates whose magnitude is driven through zero leave the support.
    Returns ``None`` when the support empties.
    """
    c = c.astype(float if nonneg else complex)
    yr = np.concatenate([y.real, y.imag])
    mu = None
    for _ in range(iters):
        S = np.flatnonzero(np.abs(c) > 1e-12 * eta)
        k = len(S)
        if k == 0:
            return None
        Bs = B[:, S]
        if nonneg:
            A = np.vstack([Bs.real, Bs.imag])
            v = c[S].real.copy()
            dg = np.ones(k)
            Hg = np.zeros((k, k))
            gval = v.sum() - eta
        else:
            A = np.block([[Bs.real, -Bs.imag], [Bs.imag, Bs.real]])
            v = np.concatenate([c[S].real, c[S].imag])
            rho = np.abs(c[S])
            ua, ub = c[S].real / rho, c[S].imag / rho
            dg = np.concatenate([ua, ub])
            # Hessian of sum |c_i| in (Re, Im) coordinates: (I - u u^T) / |c_i| per coordinate pair
            Hg = np.zeros((2 * k, 2 * k))
            idx = np.arange(k)
            Hg[idx, idx] = ub * ub / rho
            Hg[idx + k, idx + k] = ua * ua / rho
            Hg[idx, idx + k] = Hg[idx + k, idx] = -ua * ub / rho
            gval = rho.sum() - eta
        gf = A.T @ (A @ v - yr)
        if mu is None:
            mu = max(-float(dg @ gf) / float(dg @ dg), 0.0)
        m = len(v)
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = A.T @ A + mu * Hg
        K[:m, m] = K[m, :m] = dg
        rhs = -np.concatenate([gf + mu * dg, [gval]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        dv, dmu = sol[:m], sol[m]
        v_new = v + dv
        new = v_new if nonneg else v_new[:k] + 1j * v_new[k:]
        old = c[S]
        # a coordinate pushed through the origin leaves the support
        gone = (new <= 0) if nonneg else (np.real(np.conj(old) * new) <= 0.0)
        c = np.zeros_like(c)
        c[S] = np.where(gone, 0, new)
        mu = mu + dmu
        if np.any(gone):
            continue
        if np.linalg.norm(rhs) <= 1e-14 * max(1.0, np.linalg.norm(gf)) or np.linalg.norm(dv) <= 1e-15 * max(
            1.0, np.linalg.norm(v)
        ):
            break
    return c


def constrained_coeff_update(
    taus,
    loss: LossModel,
    eta: float,
    sign_mode: str = COMPLEX,
    c0: Optional[np.ndarray] = None,
    max_iter: int = 20_000,
    tol: float = 1e-8,
) -> CoefficientResult:
    """``argmin_{||c||_1 <= eta} loss(A(taus) c)``.

    When the constraint is inactive the (nonnegative) least-squares solution
    is returned directly. Otherwise short bursts of restarted accelerated
    projected gradient identify the active support and a Newton solve on the
    face ``||c||_1 = eta`` finishes; the projected-gradient KKT residual
    decides acceptance, so the Newton step never replaces a better iterate.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    k = len(taus)
    nonneg = sign_mode == NONNEGATIVE
    dtype = float if nonneg else complex
    if k == 0 or eta <= 0:
        return CoefficientResult(np.zeros(k, dtype=dtype), 0.0, True, 0)
    B = loss.forward(atoms(taus, loss.n))
    y = loss.target
    proj = project_nonneg_ball if nonneg else project_l1_ball
    if nonneg:
        c_ls, _ = nnls(np.vstack([B.real, B.imag]), np.concatenate([y.real, y.imag]), maxiter=50 * k)
    else:
        c_ls = np.linalg.lstsq(B, y, rcond=None)[0]
    if np.sum(np.abs(c_ls)) <= eta:
        return CoefficientResult(c_ls.astype(dtype), 0.0, True, 0)

    G = B.conj().T @ B
    b = B.conj().T @ y
    if nonneg:
        G, b = G.real, b.real
    yy = float(np.vdot(y, y).real)
    L = float(np.linalg.eigvalsh(G)[-1])
    if L <= 0:
        return CoefficientResult(np.zeros(k, dtype=dtype), 0.0, True, 0)

    def f(c):
        return 0.5 * float(np.real(np.vdot(c, G @ c))) - float(np.real(np.vdot(b, c))) + 0.5 * yy

    def done(c):
        return _kkt(G, b, c, L, proj, eta) <= tol * max(1.0, np.linalg.norm(c))

    start = proj(c_ls.astype(dtype), eta)
    if c0 is not None and len(c0) == k:
        warm = proj(np.asarray(c0, dtype=dtype), eta)
        if f(warm) < f(start):
            start = warm
    c = start
    f_c = f(c)
    it = 0
    burst = 50
    while it < max_iter:
        yk, tk = c.copy(), 1.0
        for _ in range(min(burst, max_iter - it)):
            it += 1
            c_new = proj(yk - (G @ yk - b) / L, eta)
            f_new = f(c_new)
            if f_new > f_c:
                # adaptive restart on objective increase
                yk, tk = c.copy(), 1.0
                continue
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
            yk = c_new + ((tk - 1) / t_new) * (c_new - c)
            c, f_c, tk = c_new, f_new, t_new
        if done(c):
            break
        polished = _face_newton(B, y, c, eta, nonneg)
        if polished is not None:
            polished = proj(polished, eta)
            # the Gram form of f cancels terms of size ||y||^2, so compare at that scale
            if f(polished) <= f_c + 1e-13 * max(1.0, yy):
                c, f_c = polished, f(polished)
                if done(c):
                    break
        burst = min(2 * burst, 2000)
    res = _kkt(G, b, c, L, proj, eta)
    return CoefficientResult(c, res, res <= tol * max(1.0, np.linalg.norm(c)), it)


# -- local refinement -------------------------------------------------------


def _support_objective(taus, c, loss: LossModel) -> float:
    return loss.value(atoms(taus, loss.n) @ c)


def local_refine(taus, coefficients, loss: LossModel, steps: int = 50) -> np.ndarray:
    """Descent on the spike locations with coefficients held fixed.

    Directions are Gauss-Newton preconditioned gradients (falling back to the
    plain gradient) with backtracking, so the loss never increases.
    """
    taus = np.mod(np.atleast_1d(np.asarray(taus, dtype=float)), 1.0)
    c = np.atleast_1d(np.asarray(coefficients, dtype=complex))
    if len(taus) == 0:
        return taus
    n = loss.n
    f = _support_objective(taus, c, loss)
    max_move = 0.5 / n
    for _ in range(steps):
        x = atoms(taus, n) @ c
        r = loss.forward(x) - loss.target
        J = loss.forward(atoms_derivative(taus, n) * c)
        grad = np.real(J.conj().T @ r)
        if np.linalg.norm(grad) <= 1e-14 * max(1.0, f):
            break
        H = np.real(J.conj().T @ J)
        damp = 1e-12 * max(np.trace(H), 1e-300)
        try:
            d = -np.linalg.solve(H + damp * np.eye(len(taus)), grad)
        except np.linalg.LinAlgError:
            d = -grad
        improved = False
        for direction in (d, -grad / max(np.trace(H), 1e-300)):
            scale = min(1.0, max_move / max(np.max(np.abs(direction)), 1e-300))
            step = direction * scale
            slope = float(grad @ step)
            if slope >= 0:
                continue
            for _ in range(40):
                cand = np.mod(taus + step, 1.0)
                f_new = _support_objective(cand, c, loss)
                if f_new <= f + 1e-4 * slope:
                    improved = True
                    break
                step = step * 0.5
                slope *= 0.5
            if improved:
                break
        if not improved:
            break
        taus, f_prev, f = cand, f, f_new
        if f_prev - f <= 1e-16 * max(1.0, f_prev):
            break
    return taus


def joint_refine(taus, c, loss: LossModel, eta: float, sign_mode: str = COMPLEX, steps: int = 30):
    """Projected Levenberg-Marquardt on locations and coefficients together.

    Moves are accepted only if the loss decreases, and coefficients are
    projected back onto the constraint set after every step. Returns the
    updated ``(taus, c)``.
    """
    taus = np.mod(np.asarray(taus, dtype=float), 1.0)
    nonneg = sign_mode == NONNEGATIVE
    c = np.asarray(c, dtype=float if nonneg else complex)
    k = len(taus)
    if k == 0:
        return taus, c
    n = loss.n
    proj = project_nonneg_ball if nonneg else project_l1_ball
    f = _support_objective(taus, c, loss)
    mu = 1e-3
    max_move = 0.5 / n
    for _ in range(steps):
        A = loss.forward(atoms(taus, n))
        r = A @ c - loss.target
        Jt = loss.forward(atoms_derivative(taus, n) * c)
        blocks = [Jt, A] if nonneg else [Jt, A, 1j * A]
        J = np.hstack(blocks)
        # real Gauss-Newton system for parameters (tau, Re c[, Im c])
        H = np.real(J.conj().T @ J)
        g = np.real(J.conj().T @ r)
        if np.linalg.norm(g) <= 1e-15 * max(1.0, f):
            break
        accepted = False
        for _ in range(12):
            try:
                d = -np.linalg.solve(H + mu * np.diag(np.diag(H) + 1e-300), g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            dt = d[:k]
            shrink = min(1.0, max_move / max(np.max(np.abs(dt)), 1e-300))
            d = d * shrink
            new_t = np.mod(taus + d[:k], 1.0)
            dc = d[k:] if nonneg else d[k : 2 * k] + 1j * d[2 * k :]
            new_c = proj(c + dc, eta)
            f_new = _support_objective(new_t, new_c, loss)
            if f_new < f:
                accepted = True
                break
            mu *= 10
        if not accepted:
            break
        rel = (f - f_new) / max(f, 1e-300)
        taus, c, f = new_t, new_c, f_new
        mu = max(mu / 10, 1e-12)
        if rel < 1e-12:
            break
    return taus, c


# -- driver -----------------------------------------------------------------


def _prune(taus, c, eta):
    keep = np.abs(c) >= 1e-10 * eta
    return taus[keep], c[keep]


def _merge_coincident(taus, c, nonneg):
    if len(taus) < 2:
        return taus, c
    order = np.argsort(taus)
    taus, c = taus[order], c[order]
    out_t, out_c = [taus[0]], [c[0]]
    for t, v in zip(taus[1:], c[1:]):
        if wrap_distance(t, out_t[-1]) < 1e-10:
            out_c[-1] = out_c[-1] + v
        else:
            out_t.append(t)
            out_c.append(v)
    if len(out_t) > 1 and wrap_distance(out_t[0], out_t[-1]) < 1e-10:
        out_c[0] += out_c.pop()
        out_t.pop()
    return np.array(out_t), np.array(out_c, dtype=float if nonneg else complex)


def solve(loss: LossModel, config: AdcgConfig) -> AdcgSolution:
    n = loss.n
    nonneg = config.sign_mode == NONNEGATIVE
    dtype = float if nonneg else complex
    taus = np.zeros(0)
    c = np.zeros(0, dtype=dtype)
    x = np.zeros(n, dtype=complex)
    obj = loss.value(x)
    trace = [obj]
    coeff_ok = True
    if config.eta <= 0:
        return AdcgSolution(taus, c, x, trace)
    for _ in range(config.max_outer):
        tau_new = select_atom(loss.gradient(x), config)
        if tau_new is None:
            break
        cand_t = np.append(taus, tau_new)
        cand_c = np.append(c, 0).astype(dtype)
        inner_prev = obj
        inner_obj = obj
        for _ in range(config.refine_iters):
            res = constrained_coeff_update(
                cand_t, loss, config.eta, config.sign_mode, cand_c, config.coeff_max_iter
            )
            coeff_ok = coeff_ok and res.converged
            cand_c = res.c
            cand_t, cand_c = _prune(cand_t, cand_c, config.eta)
            if len(cand_t) == 0:
                break
            cand_t = local_refine(cand_t, cand_c, loss, config.local_steps)
            if config.joint:
                cand_t, cand_c = joint_refine(cand_t, cand_c, loss, config.eta, config.sign_mode)
                cand_t, cand_c = _prune(cand_t, cand_c, config.eta)
            cand_t, cand_c = _merge_coincident(cand_t, cand_c, nonneg)
            inner_obj = _support_objective(cand_t, cand_c, loss)
            if inner_prev - inner_obj < 1e-10:
                break
            inner_prev = inner_obj
        if len(cand_t) and inner_obj <= obj:
            taus, c = cand_t, cand_c
            x = atoms(taus, n) @ c
            decrease = obj - inner_obj
            obj = inner_obj
        else:
            decrease = 0.0
        trace.append(obj)
        if decrease < config.tol * (1 + obj):
            break
    order = np.argsort(taus)
    return AdcgSolution(taus[order], c[order], x, trace, coeff_ok)
