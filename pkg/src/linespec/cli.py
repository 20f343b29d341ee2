"""Command-line entry point: ``linespec {generate,denoise,localize,bench,dualpoly}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .admm import AdmmOptions, atomic_norm_exact, denoise, extract_dual, lambda_rule
from .localization import DEFAULT_EPSILON, amplitudes_ls, localize_support
from .signal import NoisyObservation


def _load_config(args) -> bench.ExperimentConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        d["base_seed"] = args.seed
    if args.trials is not None:
        d["trials"] = args.trials
    return bench.ExperimentConfig.from_dict(d)


def _write(out: Optional[str], text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _read_observation(path: str) -> NoisyObservation:
    doc = json.loads(Path(path).read_text())
    if "observations" in doc:
        return NoisyObservation.from_dict(doc["observations"][0])
    return NoisyObservation.from_dict(doc)


def _admm_options(args) -> AdmmOptions:
    d = json.loads(Path(args.admm).read_text()) if getattr(args, "admm", None) else {}
    return AdmmOptions.from_dict(d)


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    paths = bench.generate(cfg, args.out or "trials", args.snr)
    print(f"wrote {len(paths)} trial files to {paths[0].parent}")
    return 0


def cmd_denoise(args) -> int:
    obs = _read_observation(args.input)
    if args.lam is not None:
        lam = args.lam
    else:
        if obs.sigma <= 0:
            raise SystemExit("noiseless observation: pass --lam explicitly")
        lam = lambda_rule(obs.sigma, obs.n, args.eta)
    res = denoise(obs, lam, _admm_options(args))
    p = extract_dual(obs, res.x_hat, lam)
    taus = localize_support(p, args.epsilon)
    est = amplitudes_ls(obs, taus)
    doc = {
        "lambda": lam,
        "x_hat": NoisyObservation(res.x_hat, 0.0, obs.seed).to_dict()["data"],
        "estimate": est.to_dict(),
        "report": {k: v for k, v in vars(res.report).items()},
    }
    _write(args.out, json.dumps(doc, indent=2))
    return 0


def cmd_localize(args) -> int:
    """Noiseless localization through the exact atomic norm and its dual."""
    obs = _read_observation(args.input)
    res = atomic_norm_exact(obs.data, _admm_options(args) if args.admm else None)
    taus = localize_support(res.dual, args.epsilon)
    est = amplitudes_ls(obs, taus)
    doc = {
        "atomic_norm": res.value,
        "estimate": est.to_dict(),
        "report": {k: v for k, v in vars(res.report).items()},
    }
    _write(args.out, json.dumps(doc, indent=2))
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    result = bench.run_sweep(cfg, workers=args.workers, with_crb=args.crb)
    out = args.out
    _write(out, result.to_csv())
    if out not in (None, "-"):
        Path(out).with_suffix(".json").write_text(result.to_json(include_records=args.records))
    return 0


def cmd_dualpoly(args) -> int:
    cfg = _load_config(args)
    table = bench.emit_dual_poly(cfg, args.method, args.trial, args.snr, args.grid)
    _write(args.out, table.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linespec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(p):
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--out", help="output path ('-' or omitted: stdout)")

    p = sub.add_parser("generate", help="write per-trial observation files")
    experiment(p)
    p.add_argument("--snr", type=bench._snr_value, default=None, help="SNR in dB (default: first grid entry)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("denoise", help="atomic norm denoising of one observation file")
    p.add_argument("input")
    p.add_argument("--lam", type=float)
    p.add_argument("--eta", type=float, default=1.2, help="lambda = eta * sigma * sqrt(n log n)")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--admm", help="JSON file with ADMM options")
    p.add_argument("--out")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("localize", help="noiseless support recovery of one observation file")
    p.add_argument("input")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--admm", help="JSON file with ADMM options")
    p.add_argument("--out")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("bench", help="Monte Carlo sweep; CSV plus a JSON mirror")
    experiment(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--crb", action="store_true", help="append Cramer-Rao rows")
    p.add_argument("--records", action="store_true", help="include per-trial records in the JSON mirror")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dualpoly", help="dual polynomial samples of one trial")
    experiment(p)
    p.add_argument("--method", default="anm-admm")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--snr", type=bench._snr_value, default=None)
    p.add_argument("--grid", type=int, default=4096)
    p.set_defaults(func=cmd_dualpoly)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"linespec {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
