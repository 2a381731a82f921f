import json
import subprocess
import sys

import pytest

from roughviab.cli import main

SMALL = {
    "simulate": ["--preset", "logistic", "--hurst", "0.5", "--paths", "3", "--steps", "128", "--seed", "7"],
    "check-invariance": ["--preset", "logistic", "--samples", "400"],
    "convergence": ["--preset", "linear", "--hurst", "0.75", "--alpha", "0.7", "--level", "1",
                    "--steps", "512", "--coarsenings", "1,2,3,4"],
    "compare": ["--paths", "6", "--steps", "128", "--samples", "300"],
    "lil": ["--steps", "1024", "--paths", "6", "--directions", "8"],
}


def run(tmp_path, name, cmd, *extra, env_seed=None, monkeypatch=None):
    out = tmp_path / name
    if env_seed is not None:
        monkeypatch.setenv("RV_SEED", str(env_seed))
    code = main([cmd, *SMALL.get(cmd, []), *extra, "--out", str(out)])
    return code, out


def snapshot(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.mark.parametrize("cmd", sorted(SMALL))
def test_outputs_byte_identical_across_reruns_and_threads(tmp_path, cmd):
    c1, a = run(tmp_path, "a", cmd, "--threads", "1")
    c2, b = run(tmp_path, "b", cmd, "--threads", "4")
    c3, c = run(tmp_path, "c", cmd, "--threads", "1")
    assert c1 == c2 == c3 == 0
    assert snapshot(a) == snapshot(b) == snapshot(c)
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == cmd and "seed" in manifest and manifest["version"]
    assert set(manifest["outputs"]) | {"manifest.json"} == set(snapshot(a))


def test_simulate_writes_one_csv_per_path(tmp_path):
    code, out = run(tmp_path, "s", "simulate")
    assert code == 0
    assert sorted(p.name for p in out.glob("path_*.csv")) == ["path_0000.csv", "path_0001.csv", "path_0002.csv"]
    head = (out / "path_0000.csv").read_text().splitlines()
    assert head[0] == "t,y1,y2,dist_K" and len(head) == 130
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert cfg["alpha"] == pytest.approx(0.45) and cfg["hurst"] == 0.5


def test_missing_preset_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_malformed_body_json(tmp_path):
    bad = tmp_path / "body.json"
    bad.write_text("{\"type\": \"box\", \"lower\": [0, 0]")
    assert main(["check-invariance", "--preset", "logistic", "--body", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text(json.dumps({"type": "box", "lower": [0, 0]}))
    assert main(["check-invariance", "--preset", "logistic", "--body", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_check_invariance_exit_codes(tmp_path):
    code, out = run(tmp_path, "ok", "check-invariance")
    assert code == 0 and json.loads((out / "report.json").read_text())["passed"] is True
    code = main(["check-invariance", "--preset", "outward-drift", "--samples", "200", "--out", str(tmp_path / "bad")])
    report = json.loads((tmp_path / "bad" / "report.json").read_text())
    assert code == 1 and report["witness"]["point"][0] == 1.0


def test_custom_body_file(tmp_path):
    body = tmp_path / "ball.json"
    body.write_text(json.dumps({"type": "ball", "center": [0, 0], "radius": 1}))
    assert main(["check-invariance", "--preset", "rotation-ball", "--body", str(body),
                 "--samples", "200", "--out", str(tmp_path / "r")]) == 0
    assert main(["check-invariance", "--preset", "identity-ball", "--samples", "200",
                 "--out", str(tmp_path / "i")]) == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "logistic", "steps": 64, "paths": 2, "seed": 11}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 11 and man["config"]["steps"] == 64
    assert main(["simulate", "--config", str(cfg), "--steps", "32", "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config"]["steps"] == 32
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--preset", "logistic", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 2


def test_env_seed_overrides_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("RV_SEED", "5")
    assert main(["simulate", "--preset", "logistic", "--steps", "32", "--seed", "9", "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "manifest.json").read_text())["seed"] == 5
    monkeypatch.setenv("RV_SEED", "x")
    assert main(["simulate", "--preset", "logistic", "--out", str(tmp_path / "f")]) == 2


def test_convergence_and_compare_outputs(tmp_path):
    code, out = run(tmp_path, "cv", "convergence")
    assert code == 0
    assert (out / "convergence.csv").read_text().splitlines()[0] == "mesh,error,slope"
    code, out = run(tmp_path, "cp", "compare")
    res = json.loads((out / "comparison.json").read_text())
    assert code == 0 and res["condition"]["passed"] and res["ensemble"]["worst_violation"] < 1e-6


def test_lil_outputs(tmp_path):
    code, out = run(tmp_path, "l", "lil")
    rows = (out / "lil.csv").read_text().splitlines()
    assert code == 0 and rows[0] == "path,direction,delta1,delta2,proxy" and len(rows) == 1 + 6 * 8
    assert 0.0 <= json.loads((out / "lil_summary.json").read_text())["consistent_fraction"] <= 1.0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "roughviab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "roughviab" in proc.stdout
