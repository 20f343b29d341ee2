"""Monte Carlo harness: trial generation, method execution, sweeps and table emission.

Seeds are derived as ``seed = base_seed + trial``. The spike locations and
phases of a trial are drawn from ``make_rng(seed)``; the noise realization is
drawn from a second Philox stream keyed by ``noise_seed(seed)`` and shared by
every SNR level of that trial, so SNR sweeps compare like with like.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import adcg as adcg_mod
from .admm import (
    AdmmOptions,
    atomic_norm_exact,
    denoise,
    extract_dual,
    lambda_rule,
    mmv_atomic_norm_exact,
    mmv_denoise,
)
from .baselines import cadzow, crb, prony, root_music
from .localization import ConditioningError, amplitudes_ls, eval_dual_poly, localize_support
from .signal import (
    DomainError,
    NoisyObservation,
    SpikeSignal,
    atoms,
    complex_noise,
    make_rng,
    match_spikes,
    random_separated_taus,
)

SCHEMA = "linespec-bench/1"
METHODS = ("anm-admm", "anm-admm-positive-off", "adcg", "adcg-positive", "prony-cadzow", "root-music")
DUAL_METHODS = ("anm-admm", "anm-admm-positive-off")
SIGN_PATTERNS = ("opposite", "positive", "random-phase")
LAYOUTS = ("cluster", "random")


class UnsupportedMethodError(ValueError):
    pass


def _snr_value(v) -> float:
    if isinstance(v, str):
        if v.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        return float(v)
    return float(v)


def _snr_json(v: float):
    return "inf" if math.isinf(v) else v


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description; every record carries a copy.

    ``layout="cluster"`` places ``count`` spikes at ``t0 + k * alpha / n``;
    ``layout="random"`` draws a random support with separation ``alpha / n``.
    An SNR of ``inf`` is the noiseless sentinel (``sigma = 0``).
    """

    n: int = 101
    count: int = 2
    alpha: float = 1.5
    signs: str = "opposite"
    layout: str = "cluster"
    snr_db: tuple = (0.0, 10.0, 20.0)
    methods: tuple = ("anm-admm",)
    trials: int = 200
    base_seed: int = 0
    eta_lambda: float = 1.2
    match_radius: Optional[float] = None  # None -> alpha / (2n)
    snapshots: int = 1
    epsilon: float = 1e-2  # localization slack below the unit bound (noisy dual)
    epsilon_exact: float = 1e-3  # same, for the noiseless exact-norm dual
    cadzow_iters: int = 30
    adcg_max_outer: int = 40
    admm: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(_snr_value(v) for v in np.atleast_1d(self.snr_db)))
        object.__setattr__(self, "methods", tuple(self.methods) if not isinstance(self.methods, str) else (self.methods,))
        object.__setattr__(self, "admm", dict(self.admm))
        if self.trials < 1:
            raise DomainError("trials must be at least 1")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not self.methods:
            raise DomainError("methods must be nonempty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise DomainError(f"unknown methods {unknown}")
        if self.signs not in SIGN_PATTERNS:
            raise DomainError(f"unknown sign pattern {self.signs!r}")
        if self.layout not in LAYOUTS:
            raise DomainError(f"unknown layout {self.layout!r}")
        if self.n < 2 or self.count < 0 or self.snapshots < 1:
            raise DomainError("need n >= 2, count >= 0 and snapshots >= 1")
        if not self.snr_db:
            raise DomainError("SNR grid must be nonempty")
        if self.snapshots > 1:
            bad = [m for m in self.methods if m not in DUAL_METHODS]
            if bad:
                raise DomainError(f"methods {bad} do not support multiple snapshots")
        if self.layout == "cluster" and self.count * self.alpha / self.n >= 1:
            raise DomainError("cluster does not fit on the torus")

    @property
    def radius(self) -> float:
        return self.match_radius if self.match_radius is not None else self.alpha / (2 * self.n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = [_snr_json(v) for v in self.snr_db]
        d["methods"] = list(self.methods)
        d["match_radius"] = self.radius
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise DomainError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- trial synthesis ---------------------------------------------------------


def trial_seed(cfg: ExperimentConfig, trial: int) -> int:
    return cfg.base_seed + trial


def noise_seed(seed: int) -> int:
    # independent of the stream that drew the spikes
    return int(np.random.SeedSequence([seed, 0x6E6F697365]).generate_state(1)[0])


def make_signal(cfg: ExperimentConfig, seed: int) -> tuple[SpikeSignal, np.ndarray]:
    """Spikes of one trial and their snapshot coefficients (``count x snapshots``)."""
    rng = make_rng(seed)
    r = cfg.count
    if cfg.layout == "cluster":
        taus = np.mod(rng.uniform() + np.arange(r) * cfg.alpha / cfg.n, 1.0)
    else:
        taus = random_separated_taus(r, cfg.alpha / cfg.n, rng)
    if cfg.signs == "opposite":
        amps = np.where(np.arange(r) % 2 == 0, 1.0, -1.0).astype(complex)
    elif cfg.signs == "positive":
        amps = np.ones(r, dtype=complex)
    else:
        amps = np.exp(2j * np.pi * rng.uniform(size=r))
    if cfg.snapshots == 1:
        coeffs = amps[:, None]
    else:
        g = rng.standard_normal((r, cfg.snapshots, 2))
        coeffs = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
        amps = coeffs[:, 0]
    order = np.argsort(taus)
    return SpikeSignal(taus[order], amps[order]), coeffs[order]


def sigma_for(x: np.ndarray, snr_db: float) -> float:
    """Noise level giving ``||x||^2 / (n sigma^2) = 10^(snr/10)`` (per snapshot average)."""
    if math.isinf(snr_db):
        return 0.0
    power = np.linalg.norm(x) ** 2 / x.size
    return float(np.sqrt(power / 10 ** (snr_db / 10)))


@dataclass(frozen=True)
class Trial:
    signal: SpikeSignal
    coeffs: np.ndarray
    clean: np.ndarray  # n x snapshots
    observation: np.ndarray  # n x snapshots
    sigma: float
    seed: int
    snr_db: float


def make_trial(cfg: ExperimentConfig, trial: int, snr_db: Optional[float] = None) -> Trial:
    snr = cfg.snr_db[0] if snr_db is None else _snr_value(snr_db)
    seed = trial_seed(cfg, trial)
    signal, coeffs = make_signal(cfg, seed)
    X = atoms(signal.taus, cfg.n) @ coeffs if signal.r else np.zeros((cfg.n, cfg.snapshots), dtype=complex)
    sigma = sigma_for(X, snr)
    noise = complex_noise(cfg.n * cfg.snapshots, noise_seed(seed)).reshape(cfg.snapshots, cfg.n).T
    Z = X + sigma * noise if sigma > 0 else X.copy()
    return Trial(signal, coeffs, X, Z, sigma, seed, snr)


# -- method execution ----------------------------------------------------------


def _fit_amplitudes(z: np.ndarray, taus: np.ndarray) -> SpikeSignal:
    try:
        return amplitudes_ls(z, taus)
    except ConditioningError:
        return SpikeSignal(taus, np.zeros(len(taus), dtype=complex))


def _anm(cfg: ExperimentConfig, tr: Trial) -> tuple[SpikeSignal, np.ndarray, dict]:
    opts = AdmmOptions.from_dict(cfg.admm) if cfg.admm else None
    Z = tr.observation
    info: dict = {"lambda": None}
    if tr.sigma == 0:
        if cfg.snapshots == 1:
            res = atomic_norm_exact(Z[:, 0], opts)
        else:
            res = mmv_atomic_norm_exact(Z, opts)
        p, rep = res.dual, res.report
        info["atomic_norm"] = res.value
    else:
        lam = lambda_rule(tr.sigma * np.sqrt(cfg.snapshots), cfg.n, cfg.eta_lambda)
        info["lambda"] = lam
        if cfg.snapshots == 1:
            res = denoise(Z[:, 0], lam, opts or AdmmOptions())
            p, rep = extract_dual(Z[:, 0], res.x_hat, lam), res.report
        else:
            res = mmv_denoise(Z, lam, opts or AdmmOptions())
            p, rep = (Z - res.X_hat) / lam, res.report
    info.update(iterations=rep.iterations, converged=rep.converged, objective=rep.objective)
    if tr.sigma == 0 and cfg.snapshots > 1:
        # the noiseless joint dual is degenerate and may reach unit norm off the support
        taus = res.decomposition.taus
    else:
        taus = localize_support(p, cfg.epsilon_exact if tr.sigma == 0 else cfg.epsilon)
    est = _fit_amplitudes(Z[:, 0], taus)
    return est, p, info


def _run_method(cfg: ExperimentConfig, tr: Trial, method: str) -> tuple[SpikeSignal, dict]:
    z = tr.observation[:, 0]
    r = cfg.count
    if method in DUAL_METHODS:
        est, _, info = _anm(cfg, tr)
        return est, info
    if method in ("adcg", "adcg-positive"):
        # oracle radius: the true coefficient mass
        eta = float(np.sum(np.abs(tr.signal.amps)))
        mode = adcg_mod.NONNEGATIVE if method == "adcg-positive" else adcg_mod.COMPLEX
        conf = adcg_mod.AdcgConfig(eta=eta, sign_mode=mode, max_outer=cfg.adcg_max_outer)
        sol = adcg_mod.solve(adcg_mod.QuadraticLoss(z), conf)
        return sol.signal, {"eta": eta, "outer": len(sol.trace) - 1, "converged": sol.coeff_converged}
    if r == 0:
        return SpikeSignal(), {}
    if method == "prony-cadzow":
        return prony(cadzow(z, r, cfg.cadzow_iters), r), {"cadzow_iters": cfg.cadzow_iters}
    if method == "root-music":
        return root_music(z, r), {}
    raise UnsupportedMethodError(method)


@dataclass
class TrialRecord:
    config_hash: str
    trial: int
    seed: int
    method: str
    snr_db: float
    sigma: float
    estimate: SpikeSignal
    location_mse: float
    amplitude_mse: float
    matched: int
    misses: int
    false_alarms: int
    solver: dict
    wall_time: float
    error: Optional[str] = None
    config: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "config_hash": self.config_hash,
            "trial": self.trial,
            "seed": self.seed,
            "method": self.method,
            "snr_db": _snr_json(self.snr_db),
            "sigma": self.sigma,
            "estimate": self.estimate.to_dict(),
            "location_mse": _num(self.location_mse),
            "amplitude_mse": _num(self.amplitude_mse),
            "matched": self.matched,
            "misses": self.misses,
            "false_alarms": self.false_alarms,
            "solver": self.solver,
            "error": self.error,
            "config": self.config,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    def canonical(self) -> str:
        """JSON without timing fields; identical for identical ``(cfg, trial, method, snr)``."""
        return json.dumps(self.to_dict(timing=False), sort_keys=True)


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def run_trial(cfg: ExperimentConfig, trial: int, method: str, snr_db: Optional[float] = None) -> TrialRecord:
    """Synthesize, run ``method``, match against the truth and record.

    Solver failures are caught and recorded with an empty estimate.
    """
    if method not in cfg.methods:
        raise DomainError(f"method {method!r} is not part of the configuration")
    tr = make_trial(cfg, trial, snr_db)
    start = time.perf_counter()
    error = None
    try:
        est, info = _run_method(cfg, tr, method)
    except (ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        est, info, error = SpikeSignal(), {}, f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - start
    m = match_spikes(tr.signal, est, cfg.radius)
    info = {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in info.items()}
    return TrialRecord(
        config_hash=cfg.config_hash(),
        trial=trial,
        seed=tr.seed,
        method=method,
        snr_db=tr.snr_db,
        sigma=tr.sigma,
        estimate=est,
        location_mse=m.location_mse,
        amplitude_mse=m.amplitude_mse,
        matched=m.n_matched,
        misses=len(m.misses),
        false_alarms=len(m.false_alarms),
        solver=info,
        wall_time=wall,
        error=error,
        config=cfg.to_dict(),
    )


# -- sweeps ---------------------------------------------------------------------


ROW_FIELDS = (
    "method",
    "snr_db",
    "trials",
    "mean_mse",
    "median_mse",
    "stderr_mse",
    "detection_rate",
    "misses",
    "false_alarms",
    "unmatched_trials",
    "failures",
    "mean_wall_time",
)


def _task(args):
    cfg, trial, method, snr = args
    return run_trial(cfg, trial, method, snr)


def _crb_row(cfg: ExperimentConfig, snr: float) -> dict:
    bounds = []
    for t in range(cfg.trials):
        tr = make_trial(cfg, t, snr)
        if tr.sigma == 0 or tr.signal.r == 0:
            bounds.append(0.0)
        else:
            bounds.append(float(np.mean(crb(tr.signal, tr.sigma, cfg.n).tau)))
    b = np.array(bounds)
    return {
        "method": "crb",
        "snr_db": snr,
        "trials": cfg.trials,
        "mean_mse": float(b.mean()),
        "median_mse": float(np.median(b)),
        "stderr_mse": float(b.std(ddof=1) / np.sqrt(len(b))) if len(b) > 1 else 0.0,
        "detection_rate": None,
        "misses": None,
        "false_alarms": None,
        "unmatched_trials": None,
        "failures": None,
        "mean_wall_time": None,
    }


def aggregate(records: Sequence[TrialRecord], count: int) -> dict:
    """Summary of one (method, SNR) cell; trials with no matched spike count as unmatched, not dropped."""
    recs = sorted(records, key=lambda r: r.trial)
    mse = np.array([r.location_mse for r in recs], dtype=float)
    ok = mse[np.isfinite(mse)]
    total = len(recs) * count
    return {
        "method": recs[0].method,
        "snr_db": recs[0].snr_db,
        "trials": len(recs),
        "mean_mse": float(ok.mean()) if len(ok) else None,
        "median_mse": float(np.median(ok)) if len(ok) else None,
        "stderr_mse": float(ok.std(ddof=1) / np.sqrt(len(ok))) if len(ok) > 1 else None,
        "detection_rate": float(sum(r.matched for r in recs) / total) if total else None,
        "misses": int(sum(r.misses for r in recs)),
        "false_alarms": int(sum(r.false_alarms for r in recs)),
        "unmatched_trials": int(len(mse) - len(ok)),
        "failures": int(sum(r.error is not None for r in recs)),
        "mean_wall_time": float(np.mean([r.wall_time for r in recs])),
    }


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[dict]
    records: list[TrialRecord]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA}\n")
        buf.write(f"# config: {json.dumps(self.config.to_dict(), sort_keys=True)}\n")
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS)
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if row[k] is None else _snr_json(row[k]) if k == "snr_db" else row[k]) for k in ROW_FIELDS})
        return buf.getvalue()

    def to_json(self, include_records: bool = False) -> str:
        d = {
            "schema": SCHEMA,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "rows": [{**r, "snr_db": _snr_json(r["snr_db"])} for r in self.rows],
        }
        if include_records:
            d["records"] = [r.to_dict() for r in self.records]
        return json.dumps(d, indent=2, sort_keys=True)


def run_sweep(cfg: ExperimentConfig, workers: int = 1, with_crb: bool = False) -> SweepResult:
    """One aggregate row per (method, SNR), optionally followed by ``crb`` rows."""
    tasks = [(cfg, t, m, s) for m in cfg.methods for s in cfg.snr_db for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [_task(t) for t in tasks]
    cells: dict[tuple, list[TrialRecord]] = {}
    for rec in records:
        cells.setdefault((rec.method, rec.snr_db), []).append(rec)
    rows = [aggregate(cells[(m, s)], cfg.count) for m in cfg.methods for s in cfg.snr_db]
    if with_crb:
        rows += [_crb_row(cfg, s) for s in cfg.snr_db]
    return SweepResult(cfg, rows, records)


# -- dual polynomial tables -----------------------------------------------------


@dataclass
class DualPolyTable:
    taus: np.ndarray
    values: np.ndarray  # grid x T complex samples
    truth: np.ndarray
    estimate: np.ndarray

    @property
    def mmv(self) -> bool:
        return self.values.shape[1] > 1

    @property
    def modulus(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA}/dualpoly\n")
        w = csv.writer(buf)
        if self.mmv:
            w.writerow(["kind", "tau", "norm_p"])
            for t, v in zip(self.taus, self.modulus):
                w.writerow(["grid", repr(float(t)), repr(float(v))])
        else:
            w.writerow(["kind", "tau", "abs_p", "re_p", "im_p"])
            for t, v in zip(self.taus, self.values[:, 0]):
                w.writerow(["grid", repr(float(t)), repr(float(abs(v))), repr(float(v.real)), repr(float(v.imag))])
        pad = [""] * (1 if self.mmv else 3)
        for t in self.truth:
            w.writerow(["true", repr(float(t)), *pad])
        for t in self.estimate:
            w.writerow(["estimate", repr(float(t)), *pad])
        return buf.getvalue()


def emit_dual_poly(
    cfg: ExperimentConfig,
    method: str,
    trial: int = 0,
    snr_db: Optional[float] = None,
    grid_size: int = 4096,
) -> DualPolyTable:
    """Grid samples of the dual polynomial of one trial plus true and estimated spike markers."""
    if method not in DUAL_METHODS:
        raise UnsupportedMethodError(f"{method!r} does not produce a dual vector")
    tr = make_trial(cfg, trial, snr_db)
    est, p, _ = _anm(cfg, tr)
    samples = eval_dual_poly(p, grid_size)
    return DualPolyTable(samples.taus, samples.values, np.array(tr.signal.taus), np.array(est.taus))


# -- serialized observations ----------------------------------------------------


def trial_document(cfg: ExperimentConfig, trial: int, snr_db: Optional[float] = None) -> dict:
    tr = make_trial(cfg, trial, snr_db)
    obs = [NoisyObservation(tr.observation[:, k], tr.sigma, noise_seed(tr.seed)).to_dict() for k in range(cfg.snapshots)]
    return {
        "schema": SCHEMA,
        "config": cfg.to_dict(),
        "trial": trial,
        "seed": tr.seed,
        "snr_db": _snr_json(tr.snr_db),
        "signal": tr.signal.to_dict(),
        "observations": obs,
    }


def generate(cfg: ExperimentConfig, out_dir, snr_db: Optional[float] = None) -> list[Path]:
    """Write one JSON file per trial holding the spikes and the observation(s)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(cfg.trials):
        path = out / f"trial_{t:04d}.json"
        # repr-exact floats make the roundtrip bit-identical
        path.write_text(json.dumps(trial_document(cfg, t, snr_db)))
        paths.append(path)
    return paths


def load_trial(path) -> tuple[SpikeSignal, list[NoisyObservation], dict]:
    doc = json.loads(Path(path).read_text())
    signal = SpikeSignal.from_dict(doc["signal"])
    obs = [NoisyObservation.from_dict(o) for o in doc["observations"]]
    return signal, obs, doc
