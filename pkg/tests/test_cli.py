from __future__ import annotations

import csv
import json

import pytest

from scalcurv import __version__
from scalcurv.cli import COMMANDS, build_K, main
from scalcurv.io import read_json
from scalcurv.sphere import SchemaError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_all_commands_registered():
    assert set(COMMANDS) == {"morse-report", "pinch-report", "degree", "minmax", "km-build", "km-verify", "fowler",
                             "bubble-check", "identities", "solve", "continuation"}


def test_degree_example(tmp_path, capsys):
    code, out, _ = run(capsys, "degree", "--n", "5", "--indices", "5,5", "--out", str(tmp_path))
    assert code == 0 and "q=1 degree 2, q=2 degree -1" in out and out.startswith("PASS")
    rows = list(csv.reader(open(tmp_path / "degree.csv")))
    assert rows[0] == ["q", "degree", "bruteforce"] and rows[2][1] == "-1"
    rep = read_json(tmp_path / "report.json")
    assert rep["passed"] and rep["metadata"]["version"] == __version__


def test_fowler_example(tmp_path, capsys):
    code, out, _ = run(capsys, "fowler", "--n", "6", "--kappa", "4", "--H", "-0.5", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "trajectory.csv")))
    assert rows[0] == ["t", "v", "vprime", "H"] and len(rows) > 100
    assert read_json(tmp_path / "report.json")["result"]["drift"] < 1e-8


def test_output_root_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SCALCURV_OUT", str(tmp_path))
    assert run(capsys, "degree")[0] == 0
    assert (tmp_path / "degree" / "report.json").exists()


@pytest.mark.parametrize("argv", [
    ["nosuch"],
    ["degree", "--bogus", "1"],
    ["degree", "--n", '"five"'],
    ["degree", "--indices", "9"],
    ["morse-report", "--K", '{"family": "spiral"}'],
    ["morse-report", "--K", '{"family": "height", "colour": 1}'],
    ["km-build", "--target-counts", "1,1,0,0,0,1"],
    [],
])
def test_usage_errors_exit_2(tmp_path, capsys, argv):
    code = main(argv + (["--out", str(tmp_path)] if len(argv) > 1 else []))
    assert code == 2


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 5, "indices": [5, 5, 4]}))
    code, out, _ = run(capsys, "degree", "--config", str(cfg), "--indices", "5", "--out", str(tmp_path / "o"))
    assert code == 0 and read_json(tmp_path / "o" / "report.json")["result"]["indices"] == [5]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"command": "fowler", "version": __version__, "params": {}}))
    assert main(["degree", "--config", str(bad)]) == 2


def test_failed_check_exits_1(tmp_path, capsys):
    code, out, _ = run(capsys, "km-build", "--m", "0", "--pinch-max", "1.0", "--out", str(tmp_path))
    assert code == 1 and out.startswith("FAIL")


def test_replay_zero_diff_and_version_warning(tmp_path, capsys):
    assert run(capsys, "minmax", "--out", str(tmp_path / "a"))[0] == 0
    code, out, _ = run(capsys, "replay", str(tmp_path / "a" / "config.json"), "--out", str(tmp_path / "b"))
    assert code == 0 and "artifacts identical" in out
    assert read_json(tmp_path / "b" / "replay.json")["identical"]
    stored = read_json(tmp_path / "a" / "config.json")
    stored["version"] = "0.0.0"
    (tmp_path / "a" / "config.json").write_text(json.dumps(stored))
    code, _, err = run(capsys, "replay", str(tmp_path / "a" / "config.json"))
    assert code == 0 and "warning" in err


def test_replay_metadata_only_drift(tmp_path, capsys):
    assert run(capsys, "fowler", "--out", str(tmp_path / "a"))[0] == 0
    # a perturbed tolerance that the run does not resolve differently shows up in metadata only
    rep = read_json(tmp_path / "a" / "report.json")
    rep["metadata"]["config"]["tol"] = 9e-9
    (tmp_path / "a" / "report.json").write_text(json.dumps(rep))
    code, out, _ = run(capsys, "replay", str(tmp_path / "a" / "config.json"), "--out", str(tmp_path / "b"))
    summary = read_json(tmp_path / "b" / "replay.json")
    assert code == 0 and "metadata differences" in out
    assert summary["artifact_diffs"] == [] and summary["metadata_diffs"][0]["path"] == "metadata.config.tol"


def test_replay_detects_artifact_drift(tmp_path, capsys):
    assert run(capsys, "degree", "--out", str(tmp_path / "a"))[0] == 0
    p = tmp_path / "a" / "degree.csv"
    p.write_text(p.read_text().replace("-1", "-7"))
    assert run(capsys, "replay", str(tmp_path / "a" / "config.json"))[0] == 1


@pytest.mark.slow
def test_parallel_sweep_order_independent(tmp_path, capsys):
    args = ["km-verify", "--samples", "4000", "--seeds", "150"]
    assert run(capsys, *args, "--m", "2,0,1", "--jobs", "3", "--out", str(tmp_path / "p"))[0] == 0
    assert run(capsys, *args, "--m", "0,1,2", "--jobs", "1", "--out", str(tmp_path / "s"))[0] == 0
    a, b = read_json(tmp_path / "p" / "report.json"), read_json(tmp_path / "s" / "report.json")
    assert a["result"] == b["result"]
    assert (tmp_path / "p" / "km_convergence.csv").read_bytes() == (tmp_path / "s" / "km_convergence.csv").read_bytes()


def test_continuation_example(tmp_path, capsys):
    code, out, _ = run(capsys, "continuation", "--out", str(tmp_path))
    rep = read_json(tmp_path / "report.json")
    assert code == 0 and abs(rep["result"]["slope"] + 0.5) <= 0.05


@pytest.mark.parametrize("cmd", ["morse-report", "pinch-report", "identities", "solve", "bubble-check"])
def test_commands_pass_with_defaults(tmp_path, capsys, cmd):
    extra = ["--dims", "3,5", "--kelvin-samples", "50"] if cmd == "bubble-check" else []
    code, out, _ = run(capsys, cmd, *extra, "--out", str(tmp_path))
    assert code == 0, out
    assert read_json(tmp_path / "report.json")["passed"]


def test_K_families():
    n = 5
    for spec in ({"family": "height"}, {"family": "axisym-poly", "coeffs": [1, 0.2]},
                 {"family": "pinched-multi-peak", "centers": 3}, {"family": "constant", "value": 2.0}):
        assert build_K(spec, n).n == n
    with pytest.raises(SchemaError):
        build_K({"family": "pinched-multi-peak", "centers": 40}, n)
    with pytest.raises(SchemaError):
        build_K("height", n)
