import json

import numpy as np
import pytest

from erple.cli import run


def test_simulate_spectrum_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate-spectrum", "--seed", "7"]
    assert run(args + ["-o", str(a)]) == 0
    assert run(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.config.json").exists()


def test_seed_required(tmp_path, capsys):
    assert run(["simulate-spectrum", "-o", str(tmp_path / "s.csv")]) == 1
    assert "seed" in capsys.readouterr().err


def test_config_precedence_and_unknown_keys(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"field_t": 0.02, "polarization_deg": 30.0}))
    out = tmp_path / "z.json"
    assert run(["zeeman", "--config", str(cfg), "--field-t", "0.04", "-o", str(out)]) == 0
    eff = json.loads((tmp_path / "z.json.config.json").read_text())
    assert eff["field_t"] == 0.04 and eff["polarization_deg"] == 30.0
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["zeeman", "--config", str(cfg), "-o", str(out)]) == 1


def test_purcell(capsys):
    assert run(["purcell", "--F", "1e6", "--gamma-bulk", "1e3", "--lambda-nm", "1540", "--n", "3.48"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["mode_volume_cubic_wavelengths"] == pytest.approx(0.093, abs=5e-4)


def test_analyze_hole_fixture(capsys):
    assert run(["analyze-hole", "--fixture", "1.5"]) == 0
    cap = capsys.readouterr()
    d = json.loads(cap.out)
    assert d["homogeneous_bound_hz"] == pytest.approx(0.75e6, rel=0.02)
    assert "0.75" in cap.err


def test_analyze_hole_without_hole(tmp_path):
    x = np.linspace(-10e6, 10e6, 101)
    path = tmp_path / "flat.csv"
    path.write_text("detuning_hz,signal_norm\n" + "".join(f"{v},{1 + 1e-3 * np.sin(v)}\n" for v in x))
    assert run(["analyze-hole", str(path)]) == 2


def test_hole_pipeline(tmp_path):
    out = tmp_path / "h.csv"
    assert run(["simulate-hole", "-o", str(out)]) == 0
    assert (tmp_path / "h.csv.meta.json").exists()
    rep = tmp_path / "r.json"
    assert run(["analyze-hole", str(out), "-o", str(rep)]) == 0
    assert json.loads(rep.read_text())["homogeneous_bound_hz"] == pytest.approx(0.75e6, rel=0.05)


def test_decay_and_lifetime(tmp_path):
    on, off = tmp_path / "on.csv", tmp_path / "off.csv"
    assert run(["simulate-decay", "--wavelength-nm", "1527.565", "--reference-statistics", "--seed", "1",
                "-o", str(on), "--off-output", str(off)]) == 0
    rep = tmp_path / "life.json"
    assert run(["analyze-lifetime", "--on", str(on), "--off", str(off), "-o", str(rep)]) == 0
    d = json.loads(rep.read_text())
    assert d["lifetime_s"] == pytest.approx(0.807e-3, rel=0.02)


def test_spectrum_round_trip(tmp_path):
    spec = tmp_path / "s.csv"
    assert run(["simulate-spectrum", "--seed", "7", "-o", str(spec)]) == 0
    cat = tmp_path / "cat.csv"
    assert run(["analyze-spectrum", str(spec), "-o", str(cat)]) == 0
    assert len(cat.read_text().strip().splitlines()) == 71
    assert json.loads((tmp_path / "cat.csv.report.json").read_text())["n_lines"] == 70


def test_zeeman_and_match(tmp_path, capsys):
    assert run(["zeeman", "--example", "six-line"]) == 0
    assert len(json.loads(capsys.readouterr().out)["plus"]) == 6
    ele = tmp_path / "e.csv"
    ele.write_text("wavelength_nm\n1527.565\n1538.690\n")
    assert run(["match", "--electrical", str(ele)]) == 0
    assert json.loads(capsys.readouterr().out)["matched_fraction"] == pytest.approx(2 / 70)


def test_missing_input_file(tmp_path):
    assert run(["analyze-hole", str(tmp_path / "nope.csv")]) == 1


def test_reproduce_exit_codes(tmp_path):
    assert run(["reproduce", "--only", "5", "6", "7", "-o", str(tmp_path / "ok.json")]) == 0
    rep = json.loads((tmp_path / "ok.json").read_text())
    assert all(c["passed"] for c in rep["criteria"])


def test_reproduce_reports_failure(tmp_path, monkeypatch):
    from erple import acceptance
    monkeypatch.setattr(acceptance, "CRITERIA", ((9, "always fails", lambda: (False, {})),))
    assert run(["reproduce", "-o", str(tmp_path / "bad.json")]) == 3
    assert json.loads((tmp_path / "bad.json").read_text())["criteria"][0]["passed"] is False
