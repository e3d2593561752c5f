import json

import pytest

from klident.cli import EXIT_CONFIG, EXIT_NO_SELECTION, EXIT_OK, main
from klident.scenarios import builtin


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "fig2" in out and "fig17-mu" in out


def test_export_and_run_file(tmp_path, capsys):
    path = tmp_path / "fig6.json"
    assert main(["export", "fig6", str(path)]) == EXIT_OK
    data = json.loads(path.read_text())
    assert data["name"] == "fig6"
    out = tmp_path / "out"
    code = main(["run", str(path), "--duration", "2", "--serial", "--seed", "0x10", "--out", str(out)])
    assert code == EXIT_OK
    assert "winner: set" in capsys.readouterr().out
    resolved = json.loads((out / "config_resolved.json").read_text())
    assert resolved["seed"] == 16 and resolved["T"] == 2.0


def test_export_to_stdout(capsys):
    assert main(["export", "fig17-lambda"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["parameter"] == "lam2"


def test_configuration_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["run", "no-such-scenario"]) == EXIT_CONFIG
    data = builtin("fig2").to_dict()
    data["dofs"] = [9]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert "dofs" in capsys.readouterr().err
    assert main(["export", "nothing"]) == EXIT_CONFIG


def test_no_selection_exit_code(tmp_path):
    data = builtin("fig3").to_dict()
    data["initial_sets"] = [[1e8, 1e8, 1e8, 1.0, 1.0, 1.0]]
    path = tmp_path / "diverging.json"
    path.write_text(json.dumps(data))
    assert main(["run", str(path), "--duration", "2", "--serial", "--out", str(tmp_path / "o")]) == EXIT_NO_SELECTION


def test_sweep_command(tmp_path, capsys):
    sweep = {"schema": "klident-sweep/1", "scenario": "fig6", "parameter": "mu", "values": [1e-2, 1e-3]}
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(sweep))
    assert main(["sweep", str(path), "--duration", "2", "--serial", "--out", str(tmp_path / "s")]) == EXIT_OK
    assert capsys.readouterr().out.count("mu=") == 2
    assert (tmp_path / "s" / "sweep.csv").exists()


def test_bad_arguments_rejected():
    with pytest.raises(SystemExit):
        main(["run", "fig2", "--seed", "-1"])
    with pytest.raises(SystemExit):
        main(["run", "fig2", "--duration", "0"])
