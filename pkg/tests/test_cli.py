import json

import pytest

import wgchaos.cli as cli
from wgchaos.analysis import write_csv
from wgchaos.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, resolve_config, run
from wgchaos.spectrum import SCAN_COUNTER, CountMismatchError


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_flags_override_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nmodel = tinv\ns = 6\nalpha-max = 700\nv-list = 1e6, 0.1\n")
    cfg = resolve_config(["spectrum", "--config", str(ini), "--s", "3"])
    assert (cfg.model, cfg.s, cfg.alpha_max, cfg.v_list) == ("tinv", 3, 700, [1e6, 0.1])
    assert cfg.models == ["tinv"]


@pytest.mark.parametrize("argv", [
    ["spectrum", "--s", "0"],
    ["spectrum", "--model", "circle"],
    ["spectrum", "--alpha-max", "ten"],
    ["spectrum", "--workers", "0"],
    ["nonsense"],
])
def test_invalid_config_exits_2(argv, tmp_path, capsys):
    assert run(argv + ["--out", str(tmp_path)] if argv[0] != "nonsense" else argv) == EXIT_CONFIG
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "config"


def test_unknown_config_key(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\nscatterers = 4\n")
    assert run(["spectrum", "--config", str(ini)]) == EXIT_CONFIG
    assert "scatterers" in capsys.readouterr().err


def test_spectrum_warm_rerun(tmp_path):
    args = ["spectrum", "--s", "3", "--alpha-max", "400", "--cache-dir", str(tmp_path / "c"),
            "--out", str(tmp_path / "o")]
    assert run(args) == EXIT_OK
    first = (tmp_path / "o" / "spectrum.csv").read_bytes()
    scans = SCAN_COUNTER["scans"]
    assert run(args) == EXIT_OK
    assert SCAN_COUNTER["scans"] == scans
    m = _manifest(tmp_path / "o")
    assert m["result"]["cache"] == "hit" and m["result"]["seconds"] < 1.0
    assert m["exit_status"] == 0 and m["config"]["s"] == 3
    assert (tmp_path / "o" / "spectrum.csv").read_bytes() == first


def test_metrics_identical_across_workers(tmp_path):
    outs = []
    for w in (1, 2):
        out = tmp_path / f"w{w}"
        args = ["metrics", "--s", "4", "--alpha-max", "400", "--workers", str(w),
                "--cache-dir", str(tmp_path / f"c{w}"), "--out", str(out)]
        assert run(args) == EXIT_OK
        outs.append(out)
    for name in ("strength.csv", "states.csv", "metrics.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_states_command(tmp_path):
    out = tmp_path / "o"
    args = ["states", "--s", "2", "--alpha-range", "101,104", "--cache-dir", str(tmp_path / "c"),
            "--out", str(out)]
    assert run(args) == EXIT_OK
    assert _manifest(out)["result"]["states"] == 4
    assert (out / "states.csv").exists()


def test_validate(tmp_path):
    assert run(["validate", "--out", str(tmp_path)]) == EXIT_OK
    body = json.loads((tmp_path / "validate.json").read_text())
    assert all(r["max_error"] <= r["tol"] for r in body)


def test_fit_npc_from_csv(tmp_path):
    src = tmp_path / "fig2a.csv"
    write_csv(src, ["s", "npc", "model"], [(s, 1.0 + 1.07 * s, "nonsym") for s in (1, 4, 8, 16)])
    assert run(["fit-npc", "--input", str(src), "--out", str(tmp_path)]) == EXIT_OK
    fit = json.loads((tmp_path / "fit_npc.json").read_text())["nonsym"]
    assert fit["nu"] == pytest.approx(1.07)
    assert run(["fit-npc", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_check_independence(tmp_path):
    args = ["check-independence", "--s", "4", "--eps-window", "9000,11000", "--out", str(tmp_path)]
    assert run(args) == EXIT_OK
    assert 0.0 < json.loads((tmp_path / "independence.json").read_text())["ratio"] < 0.05


def test_numerical_failure_writes_marker(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise CountMismatchError("inconsistent count 3", (1.0, 2.0))

    monkeypatch.setattr(cli, "load_or_scan", broken)
    out = tmp_path / "o"
    assert run(["spectrum", "--out", str(out), "--cache-dir", str(tmp_path / "c")]) == EXIT_NUMERICAL
    marker = json.loads((out / "FAILED").read_text())
    assert marker["error"] == "CountMismatchError"
    assert _manifest(out)["exit_status"] == EXIT_NUMERICAL
    monkeypatch.undo()
    assert run(["spectrum", "--s", "2", "--alpha-max", "200", "--out", str(out),
                "--cache-dir", str(tmp_path / "c")]) == EXIT_OK
    assert not (out / "FAILED").exists()
