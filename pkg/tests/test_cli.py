import json

import numpy as np
import pytest

from linespec.cli import build_parser, main
from linespec.signal import NoisyObservation, SpikeSignal, add_noise, synthesize


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"n": 33, "count": 2, "alpha": 2.0, "snr_db": [20], "methods": ["root-music"]}))
    return path


def test_subcommands():
    parser = build_parser()
    for cmd in ("generate", "denoise", "localize", "bench", "dualpoly"):
        assert cmd in parser._subparsers._group_actions[0].choices


def test_bench_writes_csv_and_json(tmp_path, config):
    out = tmp_path / "res" / "sweep.csv"
    assert main(["bench", "--config", str(config), "--trials", "3", "--seed", "5", "--crb", "--records", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# schema: linespec-bench/1")
    mirror = json.loads(out.with_suffix(".json").read_text())
    assert mirror["config"]["trials"] == 3 and mirror["config"]["base_seed"] == 5
    assert [r["method"] for r in mirror["rows"]] == ["root-music", "crb"]
    assert len(mirror["records"]) == 3


def test_bench_stdout(capsys, config):
    assert main(["bench", "--config", str(config), "--trials", "2"]) == 0
    assert "root-music" in capsys.readouterr().out


def test_generate_then_denoise(tmp_path, config):
    trials = tmp_path / "trials"
    assert main(["generate", "--config", str(config), "--trials", "2", "--out", str(trials)]) == 0
    files = sorted(trials.glob("trial_*.json"))
    assert len(files) == 2
    out = tmp_path / "den.json"
    assert main(["denoise", str(files[0]), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    truth = json.loads(files[0].read_text())["signal"]
    est = SpikeSignal.from_dict(doc["estimate"])
    assert est.r == 2
    np.testing.assert_allclose(est.taus, sorted(s["tau"] for s in truth), atol=2e-3)
    assert doc["report"]["converged"]


def test_localize(tmp_path):
    s = SpikeSignal([0.1, 0.5], [1.0, 1j])
    path = tmp_path / "obs.json"
    path.write_text(json.dumps(NoisyObservation(synthesize(s, 16), 0.0, 0).to_dict()))
    out = tmp_path / "loc.json"
    assert main(["localize", str(path), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    np.testing.assert_allclose(SpikeSignal.from_dict(doc["estimate"]).taus, s.taus, atol=1e-4)
    assert doc["atomic_norm"] == pytest.approx(2.0, rel=1e-3)


def test_denoise_explicit_lambda(tmp_path):
    obs = add_noise(synthesize(SpikeSignal([0.3], [2.0]), 20), 0.1, 3)
    path = tmp_path / "obs.json"
    path.write_text(json.dumps(obs.to_dict()))
    assert main(["denoise", str(path), "--lam", "1.0", "--out", str(tmp_path / "o.json")]) == 0
    assert json.loads((tmp_path / "o.json").read_text())["lambda"] == 1.0


def test_dualpoly(tmp_path):
    cfg = tmp_path / "separated.json"
    cfg.write_text(json.dumps({"n": 33, "count": 6, "alpha": 2.7, "layout": "random", "signs": "random-phase", "snr_db": ["inf"]}))
    out = tmp_path / "dual.csv"
    assert main(["dualpoly", "--config", str(cfg), "--grid", "1024", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "kind,tau,abs_p,re_p,im_p"
    assert sum(line.startswith("grid,") for line in lines) == 1024


def test_errors_exit_2(tmp_path, capsys, config):
    assert main(["dualpoly", "--config", str(config), "--method", "root-music"]) == 2
    assert "linespec dualpoly:" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"trials": 0}))
    assert main(["bench", "--config", str(bad)]) == 2
    assert main(["localize", str(tmp_path / "missing.json")]) == 2
