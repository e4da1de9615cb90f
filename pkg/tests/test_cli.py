import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from encobs import crypto
from encobs.cli import main
from encobs.experiments.config import ConfigError, load_config, preset_names
from encobs.experiments.replay import replay
from encobs.experiments.runner import OUT_ENV, cell_seed, default_out_dir, run

SMALL = """\
name: small
kind: trajectories
plant: dc_motor
mode: encrypted
h: 0.05
lam: 9880
schedules: ["k^2", 30]
horizon: 0.5
substeps: 5
transcripts: true
crypto: {n_key: 2}
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def test_presets_ship():
    assert {"table1", "table2", "table3", "fig3", "fig4", "fig5", "frontier"} <= set(preset_names())
    for name in preset_names():
        load_config(preset=name)


def test_table_presets_match_study_grids():
    assert load_config(preset="table1").h == [0.01, 0.03, 0.05, 0.07, 0.083]
    t2 = load_config(preset="table2")
    assert t2.schedules == ["k^0.4", "k", "k^1.5", "k^2", "k^3"]
    assert (t2.mrms_window, t2.mrms_at) == (50.0, 53.0)
    assert load_config(preset="table3").schedules == [10, 30, 50, 70, 100]


def test_empty_grid_is_config_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(SMALL.replace("h: 0.05", "h: []"))
    with pytest.raises(ConfigError):
        load_config(p)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize("patch", ["mode: warp", "horizon: 0.123", "colour: red", "schedules: []"])
def test_invalid_configs(tmp_path, patch):
    key = patch.split(":")[0]
    text = "\n".join(l for l in SMALL.splitlines() if not l.startswith(key + ":")) + "\n" + patch + "\n"
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 1


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 1
    assert main(["run", "--preset", "nope"]) == 1


def test_run_outputs_and_determinism(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(small_cfg), "--out", str(a), "--seed", "5"]) == 0
    assert main(["run", str(small_cfg), "--out", str(b), "--seed", "5"]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert Path("small.csv") in files and Path("report.json") in files
    assert Path("runs/cell000/trace.csv") in files and Path("plots/norm_z.svg") in files
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    report = json.loads((a / "report.json").read_text())
    for row in report["rows"]:
        assert (a / row["trace"]).exists()


def test_seed_changes_ciphertexts_not_signals(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(small_cfg), "--out", str(a), "--seed", "1"])
    main(["run", str(small_cfg), "--out", str(b), "--seed", "2"])
    assert (a / "small.csv").read_bytes() == (b / "small.csv").read_bytes()
    t = "runs/cell000/transcript.jsonl"
    assert (a / t).read_bytes() != (b / t).read_bytes()


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert default_out_dir() == tmp_path / "env"


def test_cell_seeds_independent():
    seeds = {cell_seed(0, i) for i in range(100)}
    assert len(seeds) == 100
    assert cell_seed(1, 0) != cell_seed(0, 0)


def test_parallel_matches_serial(tmp_path, small_cfg):
    cfg = load_config(small_cfg)
    run(cfg, tmp_path / "s", jobs=1)
    run(cfg, tmp_path / "p", jobs=2)
    assert (tmp_path / "s/small.csv").read_bytes() == (tmp_path / "p/small.csv").read_bytes()


@pytest.fixture
def transcript(tmp_path, small_cfg):
    out = tmp_path / "run"
    assert main(["run", str(small_cfg), "--out", str(out)]) == 0
    return out / "runs/cell000/transcript.jsonl"


def test_replay_fresh_transcript_passes(transcript):
    v = replay(transcript)
    assert v.ok and v.stage == "rerun" and v.records == 10
    assert main(["replay", str(transcript)]) == 0


def _flip_residue(path, index, field="u"):
    lines = path.read_text().splitlines()
    rec = json.loads(lines[index + 1])
    ct, params = crypto.from_text(rec[field])
    body = ct.body.copy()
    body[0, 0] = (body[0, 0] + 1) % params.q
    rec[field] = crypto.to_text(crypto.LweCiphertext(body, ct.params, ct.noise))
    lines[index + 1] = json.dumps(rec, sort_keys=True)
    path.write_text("\n".join(lines) + "\n")


def test_replay_flipped_residue_fails_with_index(transcript):
    _flip_residue(transcript, 3)
    v = replay(transcript, rerun=False)
    assert not v.ok and v.index == 3 and v.stage == "keyless"
    assert main(["replay", str(transcript)]) == 2


def test_replay_other_seed_mismatch(transcript):
    v = replay(transcript, seed=12345)
    assert not v.ok and v.stage == "rerun"
    assert main(["replay", str(transcript), "--seed", "12345"]) == 2


def test_replay_rejects_leaky_header(transcript):
    lines = transcript.read_text().splitlines()
    head = json.loads(lines[0])
    head["secret_key"] = [1, 2, 3]
    lines[0] = json.dumps(head, sort_keys=True)
    transcript.write_text("\n".join(lines) + "\n")
    v = replay(transcript)
    assert not v.ok and v.stage == "confinement"


def test_replay_corrupt_file(tmp_path):
    p = tmp_path / "x.jsonl"
    p.write_text("not json\n")
    assert main(["replay", str(p)]) == 1


def test_check_cert_exit_codes(tmp_path, certs, capsys):
    from encobs.stability.certificate import write_certificate
    cert = certs.plain(0.05)
    good = write_certificate(cert, tmp_path / "good.cert")
    assert main(["check-cert", str(good), "--plant", "dc_motor", "--h", "0.05"]) == 0
    assert "FEASIBLE" in capsys.readouterr().out
    bad = type(cert)(cert.vars.scaled(1.0), cert.h, {})
    bad.vars.P = -bad.vars.P
    badp = write_certificate(bad, tmp_path / "bad.cert")
    assert main(["check-cert", str(badp), "--plant", "dc_motor", "--h", "0.05"]) == 2
    assert main(["check-cert", str(tmp_path / "missing.cert"), "--h", "0.05"]) == 1
    assert main(["check-cert", str(good), "--plant", "warp_drive", "--h", "0.05"]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "encobs", "run", "--preset", "nope"],
                         capture_output=True, text=True)
    assert res.returncode == 1
    assert "unknown preset" in res.stderr
