import json

import pytest

from geeopt.cli import main
from geeopt.scenario_gen import load


@pytest.fixture
def scenario(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"K": 3, "N": 2, "seed": 4}))
    out = tmp_path / "s.json"
    assert main(["gen", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_gen(scenario):
    s = load(scenario)
    assert (s.K, s.N) == (3, 2)


@pytest.mark.parametrize("extra", [[], ["--qos", "barrier", "--rmin", "0.266", "--rho", "2"],
                                   ["--qos", "generalized", "--rmin", "0.266"]])
def test_run(scenario, extra, capsys):
    assert main(["run", "--scenario", str(scenario)] + extra) == 0
    out = capsys.readouterr().out
    assert "gee=" in out and "I_D=" in out


def test_run_missing_file(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "nope.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_sweep(tmp_path):
    cfg = tmp_path / "sw.json"
    cfg.write_text(json.dumps({"param": "xi_ratio", "values": [0.0, 0.1], "seeds": 2, "base": {"K": 3, "N": 2}}))
    out = tmp_path / "o.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text().startswith("sweep_param,value,qos_mode")


def test_sweep_bad_config(tmp_path, capsys):
    cfg = tmp_path / "sw.json"
    cfg.write_text(json.dumps({"param": "xi_ratio", "values": [0.0], "seeds": 1, "base": {"K": -1}}))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    assert "base" in capsys.readouterr().err


def test_validate_quick(capsys):
    assert main(["validate", "--quick"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_usage_error():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
