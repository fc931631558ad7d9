import json
import os

import numpy as np
import pytest

from spikestab import cli, persist
from spikestab.lattice import TrigFamily


def _run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_constants_command(tmp_path, capsys):
    assert _run(tmp_path, "constants", "-N", "1") == 0
    out = json.loads((tmp_path / "constants.json").read_text())
    assert out["N1"]["C3"] == pytest.approx(0.7881773875381032, rel=1e-6)
    assert "created" in out["metadata"]
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["command"] == "constants" and cfg["N"] == 1
    assert "C1" in capsys.readouterr().out


def test_ground_state_command(tmp_path):
    assert _run(tmp_path, "ground-state", "-N", "1") == 0
    summary = json.loads((tmp_path / "ground_state_N1.json").read_text())
    assert summary["closed_form_max_error"] < 1e-8
    assert summary["pohozaev_ratio"] == pytest.approx(1 / 3, abs=1e-6)
    header = (tmp_path / "profile_N1.csv").read_text().splitlines()[0]
    assert header == "r,w,dw"


def test_classify_prints_rows(tmp_path, capsys):
    assert _run(tmp_path, "classify", "--lattice", "case:IIa", "--lam", "1,2") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all("verdict=stable" in l for l in lines)
    data = json.loads((tmp_path / "classify.json").read_text())
    assert data["positivity_audit"]["positive"]


def test_violated_hypotheses_exit_two(tmp_path):
    assert _run(tmp_path, "classify", "--lattice", "line:constant") == 2


def test_config_file_and_override(tmp_path):
    spec = TrigFamily.make(1, a0=1, a2=1, c2=-0.01)
    (tmp_path / "lat.json").write_text(json.dumps(spec.to_dict()))
    cfg = {"command": "sweep", "lattice": "lat.json", "lam_grid": "1:2:3"}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(tmp_path / "run.json"), "--out", str(out),
                     "--lam-grid", "1:2:2"]) == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 3  # header plus the overriding two-point grid
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["lam_grid"] == "1:2:2"


def test_config_errors(tmp_path):
    assert _run(tmp_path, "classify") == 2  # no lattice
    assert _run(tmp_path, "classify", "--lattice", "case:nope") == 2
    assert _run(tmp_path, "classify", "--lattice", "case:I", "--lam", "-1") == 2
    assert cli.main(["classify", "--config", str(tmp_path / "missing.json"),
                     "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["classify", "--config", str(tmp_path / "bad.json"),
                     "--out", str(tmp_path)]) == 2
    assert _run(tmp_path, "sweep", "--lattice", "case:I", "--lam-grid", "1:2") == 2


def test_unwritable_output_exit_three(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["constants", "-N", "1", "--out", str(blocker / "sub")]) == 3


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(persist.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["classify", "--lattice", "case:IIa"]) == 0
    assert (tmp_path / "env" / "classify.txt").exists()


def test_commit_failure_leaves_no_partial_files(tmp_path, monkeypatch):
    out = persist.OutputDir(tmp_path)
    out.add_text("a.txt", "a")
    out.add_text("b.txt", "b")
    real = os.replace
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        real(src, dst)

    monkeypatch.setattr(persist.os, "replace", flaky)
    with pytest.raises(PermissionError):
        out.commit()
    assert not (tmp_path / "a.txt").exists()
    assert not (tmp_path / "b.txt").exists()


def test_deterministic_json():
    a = persist.dumps({"b": np.float64(1.5), "a": np.arange(3), "c": float("nan")})
    b = persist.dumps({"c": float("nan"), "a": [0, 1, 2], "b": 1.5})
    assert a == b
    assert json.loads(a)["c"] == "nan"


def test_field_dump_round_trip(tmp_path):
    out = persist.OutputDir(tmp_path)
    arr = np.random.default_rng(0).normal(size=(4, 5))
    out.add_field("u", arr, {"h": 0.1})
    out.commit()
    hdr = json.loads((tmp_path / "u.json").read_text())
    back = np.fromfile(tmp_path / hdr["data_file"], dtype="<f8").reshape(hdr["shape"])
    np.testing.assert_array_equal(back, arr)


def test_parse_grid_and_lambdas():
    assert persist.parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    with pytest.raises(persist.ConfigError):
        persist.parse_grid("0:1")
    with pytest.raises(persist.ConfigError):
        persist.check_lambdas([1.0, 0.0])


def test_verify_suite_exit_codes(tmp_path):
    assert _run(tmp_path, "verify", "lemma21") == 0
    report = json.loads((tmp_path / "verify_lemma21.json").read_text())
    assert report["pass"] and report["suite"] == "lemma21"


def test_verify_failure_exit_one(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.VERIFIERS, "lemma21",
                        lambda cfg: ([cli._check("forced", 1.0, 0.0)], {}))
    assert _run(tmp_path, "verify", "lemma21") == 1


def test_spectrum_and_evolve_commands(tmp_path):
    assert _run(tmp_path, "spectrum", "--lattice", "line:zeroV", "--h", "0.1") == 0
    assert (tmp_path / "bound_state.bin").exists()
    assert _run(tmp_path, "evolve", "--lattice", "line:IIa", "--h", "0.1", "--periods", "1",
                "--seeds", "0,1") == 0
    data = json.loads((tmp_path / "evolve.json").read_text())
    assert len(data["probes"]) == 2
    assert all(p["mass_drift_rate"] < 1e-10 for p in data["probes"])


def test_outputs_byte_identical_apart_from_metadata(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["sweep", "--lattice", "case:IIb", "--lam-grid", "0.5:1.5:3",
                         "--out", str(out)]) == 0
        data = json.loads((out / "sweep.json").read_text())
        data.pop("metadata")
        runs.append((persist.dumps(data), (out / "sweep.csv").read_bytes(),
                     (out / "config.json").read_bytes()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]


def test_degenerate_hessian_reports_violation(tmp_path, capsys):
    # V and m constant: every point is critical and the Hessian vanishes
    assert _run(tmp_path, "classify", "--lattice", "line:constant") == 2
    assert "hypotheses-violated" in capsys.readouterr().out
