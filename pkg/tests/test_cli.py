from __future__ import annotations

import json
import subprocess
import sys

import pytest

from qshuttle.cli import format_csv, main
from qshuttle.device import DeviceConfig, serialize
from qshuttle.experiments import ExperimentResult

QUICK_RB = ["--sequences", "2", "--shots", "50", "--lengths", "1,2,3", "--bootstrap", "10"]


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_rb2q_is_byte_identical(tmp_path):
    a_code, a = _run(tmp_path, "rb2q", "--interleave-cz", "--seed", "7", *QUICK_RB, name="a")
    b_code, b = _run(tmp_path, "rb2q", "--interleave-cz", "--seed", "7", *QUICK_RB, name="b")
    assert a_code == b_code == 0
    assert (a / "raw.csv").read_bytes() == (b / "raw.csv").read_bytes()
    header = (a / "raw.csv").read_text().splitlines()[0]
    assert header.startswith("L,seq_index,target,up_count,shots")
    summary = json.loads((a / "summary.json").read_text())
    assert {"p_ref", "p_cz", "F_C", "F_CZ", "F_CZ_err"} <= set(summary["scalars"])
    assert summary["seed"] == 7


def test_manifest_reproduces_run(tmp_path):
    code, out = _run(tmp_path, "rb2q", "--seed", "3", *QUICK_RB)
    assert code == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["subcommand"] == "rb2q" and m["seed"] == 3
    assert m["config_digest"] == DeviceConfig().digest()
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(m["config"]))
    code, again = _run(tmp_path, "rb2q", "--seed", "3", "--config", str(cfg_path), *QUICK_RB, name="again")
    assert code == 0
    assert (again / "raw.csv").read_bytes() == (out / "raw.csv").read_bytes()


def test_fit_reingest_matches(tmp_path):
    code, out = _run(tmp_path, "rb1q", "--seed", "2", "--sequences", "3", "--shots", "100", "--lengths", "1,5,10,20", "--bootstrap", "20")
    assert code == 0
    first = json.loads((out / "summary.json").read_text())["scalars"]
    code, refit = _run(tmp_path, "fit", str(out / "raw.csv"), "--seed", "2", "--bootstrap", "20", name="refit")
    assert code == 0
    again = json.loads((refit / "summary.json").read_text())["scalars"]
    for k in ("p_L", "F_p_L", "F_p_M", "F_p_L_err"):
        assert again[k] == pytest.approx(first[k], abs=1e-9)


def test_fit_xy_model(tmp_path):
    code, out = _run(tmp_path, "ramsey", "--shots", "200", "--seed", "1")
    assert code == 0
    assert (out / "raw.csv").read_text().splitlines()[0] == "delay_s,phase_rad,up_prob"
    code, _ = _run(tmp_path, "fit", str(out / "raw.csv"), "--model", "nonexistent", name="bad")
    assert code == 1


def test_missing_key_reports_name(tmp_path, capsys):
    doc = json.loads(serialize(DeviceConfig()))
    del doc["noise"]["t2_echo"]
    doc["base"] = "none"
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    code, _ = _run(tmp_path, "ramsey", "--config", str(path))
    assert code == 1
    assert "noise.t2_echo" in capsys.readouterr().err


def test_unknown_key_and_bad_args(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{"warp_drive": 1}')
    assert _run(tmp_path, "ramsey", "--config", str(path))[0] == 1
    assert "warp_drive" in capsys.readouterr().err
    assert main(["no-such-command"]) == 1
    assert main(["rb2q", "--shots", "-3"]) == 1
    assert _run(tmp_path, "rb1q", "--interleave-cz", *QUICK_RB)[0] == 1


def test_detuning_sweep_reports_four_curves(tmp_path):
    code, out = _run(tmp_path, "detuning-sweep", "--sequences", "2", "--detunings", "0,10000", "--json-only")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert sorted(summary["tables"]["curves"]) == sorted(["1e+06", "2e+06", "4e+06", "8e+06"])
    assert not (out / "raw.csv").exists()


def test_no_noise_ramsey_exit_zero(tmp_path):
    code, out = _run(tmp_path, "ramsey", "--no-noise", "--shots", "100", "--times", "0,1e-6,2e-6,3e-6,4e-6")
    assert code == 0
    assert "T2_star_lower_bound" in json.loads((out / "summary.json").read_text())["scalars"]


def test_empty_result_header_only():
    res = ExperimentResult("x", ("a", "b"), [], [], {}, 0, "d")
    assert format_csv(res) == "a,b\n"


def test_csv_number_format():
    res = ExperimentResult("x", ("v",), [(1 / 3,)], [], {}, 0, "d")
    assert format_csv(res) == "v\n0.333333333333\n"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qshuttle", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "qshuttle" in proc.stdout
