import json
import logging

import pandas as pd
import pytest
from click.testing import CliRunner

from config import Config, Verbosity
from run import main


@pytest.fixture
def cli(tmp_path, monkeypatch):
    monkeypatch.delenv("PNORMS_CONFIG", raising=False)
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path):

        def invoke(*args):
            return runner.invoke(main, [str(a) for a in args])

        yield invoke


def test_identity_vector_bounds(cli):
    result = cli("gen", "--kind", "identity", "--n", 2, "--d", 3, "--out", "t.json")
    assert result.exit_code == 0, result.output

    result = cli("norm", "tensor", "--method", "vector", "--in", "t.json", "--p", 3)
    assert result.exit_code == 0, result.output
    assert "1.259921" in result.output
    assert "2.000000" in result.output

    result = cli("norm", "tensor", "--method", "vector", "--in", "t.json", "--p", 3, "--json")
    payload = json.loads(result.output)
    assert payload["method"] == "vector"
    assert payload["upper"] == pytest.approx(2)


def test_validation_errors_exit_2(cli):
    cli("gen", "--kind", "identity", "--n", 3, "--d", 3, "--out", "t.json")
    result = cli("norm", "tensor", "--method", "unfold", "--in", "t.json", "--p", 2)
    assert result.exit_code == 2
    assert "p must exceed 2" in result.output

    result = cli("norm", "tensor", "--method", "cover", "--in", "t.json", "--p", 3)
    assert result.exit_code == 2
    assert "hitting sets" in result.output

    result = cli("gen", "--kind", "known-nuclear", "--n", 0, "--d", 3, "--out", "k.json")
    assert result.exit_code == 2


def test_hitset_build_probe_and_cover(cli):
    result = cli("hitset", "build", "--kind", "hh", "--n", 3, "--p", 3, "--out", "h.json")
    assert result.exit_code == 0, result.output
    assert "HH" in result.output

    result = cli("hitset", "probe", "--in", "h.json", "--probes", 200, "--seed", 1)
    assert result.exit_code == 0, result.output
    lines = dict(map(str.strip, line.split("::")) for line in result.output.strip().splitlines())
    assert float(lines["probed"]) >= float(lines["certified"]) - 1e-9

    cli("gen", "--kind", "identity", "--n", 3, "--d", 3, "--out", "t.json")
    result = cli("norm", "tensor", "--method", "cover", "--in", "t.json", "--p", 3, "--hitset", "h.json")
    assert result.exit_code == 0, result.output
    assert "taus" in result.output


def test_hitset_build_needs_parameters(cli):
    result = cli("hitset", "build", "--kind", "hb", "--n", 3, "--p", 3, "--out", "h.json")
    assert result.exit_code == 2
    assert "--gamma" in result.output


def test_hitset_curve(cli):
    result = cli("hitset", "curve", "--points", 5, "--out", "curve.csv")
    assert result.exit_code == 0, result.output
    frame = pd.read_csv("curve.csv")
    assert list(frame.columns) == ["alpha", "ratio", "hb_bound", "hh_bound"]
    assert len(frame) == 5


def test_matrix_ops(cli):
    cli("gen", "--kind", "identity", "--n", 3, "--d", 2, "--out", "m.json")
    result = cli("norm", "matrix", "--op", "pv", "--in", "m.json", "--p", 3, "--json")
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    # the identity matrix has spectral 3-norm 3^{1/3}
    assert payload["lower"] <= 3 ** (1 / 3) * (1 + 1e-6) <= payload["upper"] * (1 + 2e-6)

    result = cli("norm", "matrix", "--op", "oracle", "--in", "m.json", "--p", 3, "--restarts", 5)
    assert float(result.output) == pytest.approx(3 ** (1 / 3), rel=1e-5)


def test_bench_run(cli):
    with open("exp.yml", "w") as f:
        f.write("p: 3\nd: 3\nn: [3]\nr: [1]\ninstances: 1\nmethods: [vector, unfold]\n")
    result = cli("bench", "run", "--config", "exp.yml", "--out", "results.csv")
    assert result.exit_code == 0, result.output
    assert "min_ratio" in result.output

    frame = pd.read_csv("results.csv")
    assert list(frame["method"]) == ["vector", "unfold"]
    with open("results.json") as f:
        payload = json.load(f)
    assert {"config", "provenance", "asymptotic_bounds", "rows", "instances"} <= set(payload)


def test_bench_rejects_bad_config(cli):
    with open("exp.yml", "w") as f:
        f.write("p: 4\nd: 3\n")
    result = cli("bench", "run", "--config", "exp.yml")
    assert result.exit_code == 2


def test_config_file(tmp_path, monkeypatch):
    path = tmp_path / "config.yml"
    path.write_text("solver: SCS\ntol: 1.0e-6\nverbosity: 1\ncovering-constants:\n  delta3: 5\n")
    config = Config(path)
    assert config.solver == "SCS"
    assert config.tol == 1e-6
    assert config.verbosity is Verbosity.INFO
    assert config.verbosity.log_level == logging.INFO
    assert config.covering_constants.delta3 == 5
    assert config.log_file == "pnorms.log"

    monkeypatch.setenv("PNORMS_CONFIG", str(path))
    assert Config.from_env().solver == "SCS"

    assert Config.default().verbosity is Verbosity.QUIET


def test_verbosity():
    assert str(Verbosity(2)) == "debug"
    assert Verbosity.from_count(5) is Verbosity.DEBUG
    assert Verbosity.from_count(1) is Verbosity.INFO
    assert Verbosity.QUIET.log_level == logging.WARNING
    assert Verbosity.DEBUG.solver_output
    assert not Verbosity.INFO.solver_output
    with pytest.raises(ValueError):
        Verbosity(3)
