import csv

import pytest
import yaml

from sitstab import io
from sitstab.cli import main
from sitstab.controllers import Backstepping, LinearWildMales
from sitstab.experiments import PRESETS, ComparisonRow
from sitstab.integrate import IntegratorConfig, simulate
from sitstab.model import TABLE1, persistence_equilibrium

K = TABLE1.K

SCENARIO = """\
schema_version: "1"
params: {base: table1, K: 22200}
scenario:
  controller: {type: wild_males, lam: 22}
  z0: persistence
  t_final: 20
  step: 0.05
"""


def _write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_documents_round_trip(name):
    doc = io.preset_document(name)
    once = io.emit_document(io.parse_document(doc))
    assert once == doc
    assert io.emit_document(io.parse_document(yaml.safe_load(yaml.safe_dump(once)))) == once


def test_parse_then_emit_is_idempotent(tmp_path):
    doc = io.load_document(_write(tmp_path, SCENARIO))
    first = io.emit_document(io.parse_document(doc))
    second = io.emit_document(io.parse_document(first))
    assert first == second
    assert io.parse_document(first).study.controller == LinearWildMales(22.0)


def test_validation_lists_every_offending_key():
    doc = {
        "schema_version": "1",
        "params": {"beta_E": -1, "colour": "red"},
        "scenario": {"controller": {"type": "backstepping", "theta": 220}, "t_final": 10, "speed": 3},
    }
    with pytest.raises(io.ConfigError) as err:
        io.validate_document(doc)
    text = "\n".join(err.value.errors)
    for key in ("beta_E", "colour", "alpha", "beta_s", "speed"):
        assert key in text
    assert len(err.value.errors) >= 4


def test_unknown_version_and_two_studies_rejected():
    with pytest.raises(io.ConfigError):
        io.validate_document({"schema_version": "2"})
    with pytest.raises(io.ConfigError, match="at most one study"):
        io.validate_document({"schema_version": "1", "certify": {}, "evidence": {"controller": {"type": "wild_males",
                                                                                                  "lam": 22}}})


def test_semantic_errors_become_config_errors():
    doc = {"schema_version": "1", "params": {"delta_s": 0.05}}
    with pytest.raises(io.ConfigError, match="delta_s"):
        io.parse_document(doc)


def test_trajectory_csv_round_trip_is_exact(tmp_path):
    traj = simulate(TABLE1, Backstepping(220, 13, 1), persistence_equilibrium(TABLE1).state, IntegratorConfig(5.0))
    path = tmp_path / "traj.csv"
    io.write_trajectory_csv(path, traj)
    with open(path) as fh:
        assert fh.readline() == "t,E,M,F,Ms,u\n"
    back = io.read_trajectory_csv(path)
    assert back.times.tobytes() == traj.times.tobytes()
    assert back.states.tobytes() == traj.states.tobytes()
    assert back.controls.tobytes() == traj.controls.tobytes()


def test_table_csv_round_trip(tmp_path):
    rows = [ComparisonRow(9.06, 667.04, 8.24e6), ComparisonRow(22.0, None, None)]
    path = tmp_path / "table.csv"
    io.write_table_csv(path, rows)
    assert path.read_text().splitlines() == ["gain,T_days,cost", "9.06,667.0,8240000.0", "22.0,,"]
    assert io.read_table_csv(path) == [ComparisonRow(9.06, 667.0, 8.24e6), ComparisonRow(22.0, None, None)]


def test_cli_thresholds(tmp_path, capsys):
    assert main(["thresholds", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "R0 = 76.5625" in out and "theta_min = 75.5625" in out and "lambda_min = 9.0675" in out
    assert (tmp_path / "thresholds.csv").exists()


def test_cli_simulate_from_config(tmp_path):
    assert main(["simulate", "--config", str(_write(tmp_path, SCENARIO)), "--out", str(tmp_path)]) == 0
    traj = io.read_trajectory_csv(tmp_path / "trajectory.csv")
    assert traj.times[-1] == pytest.approx(20.0)
    assert len(traj) == 401


def test_cli_overrides(tmp_path):
    args = ["simulate", "--config", str(_write(tmp_path, SCENARIO)), "--out", str(tmp_path), "--t-final", "2",
            "--step", "0.5"]
    assert main(args) == 0
    assert io.read_trajectory_csv(tmp_path / "trajectory.csv").times.tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_cli_lambda_preset_ends_below_level(tmp_path):
    assert main(["simulate", "--preset", "lambda-sec331", "--out", str(tmp_path), "--step", "0.05"]) == 0
    with open(tmp_path / "trajectory.csv") as fh:
        last = list(csv.DictReader(fh))[-1]
    assert float(last["E"]) < K / 100


def test_cli_compare_writes_table(tmp_path):
    doc = {"schema_version": "1", "comparison": {"family": "lambda", "grid": [22, 16], "step": 0.05}}
    path = _write(tmp_path, yaml.safe_dump(doc))
    assert main(["compare", "--config", str(path), "--out", str(tmp_path)]) == 0
    rows = io.read_table_csv(tmp_path / "table_lambda.csv")
    assert [r.gain for r in rows] == [16.0, 22.0]


def test_cli_robustness_writes_runs_and_summary(tmp_path):
    doc = {"schema_version": "1",
           "robustness": {"controller": {"type": "wild_males", "lam": 22}, "n_runs": 3, "t_final": 20, "step": 0.1}}
    path = _write(tmp_path, yaml.safe_dump(doc))
    assert main(["robustness", "--config", str(path), "--out", str(tmp_path), "--seed", "4"]) == 0
    assert sorted(p.name for p in (tmp_path / "runs").iterdir()) == ["run_0000.csv", "run_0001.csv", "run_0002.csv"]
    with open(tmp_path / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_cli_empty_config_exits_2(tmp_path, capsys):
    assert main(["simulate", "--config", str(_write(tmp_path, ""))]) == 2
    assert "schema_version" in capsys.readouterr().err


def test_cli_invalid_config_lists_all_errors(tmp_path, capsys):
    bad = 'schema_version: "1"\nparams: {beta_E: -1, nu: 3}\nscenario: {controller: {type: wild_males}, t_final: 1}\n'
    assert main(["simulate", "--config", str(_write(tmp_path, bad))]) == 2
    err = capsys.readouterr().err
    assert "beta_E" in err and "params/nu" in err and "lam" in err


def test_cli_config_errors(tmp_path):
    assert main(["simulate", "--preset", "no-such-preset"]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["simulate", "--config", str(_write(tmp_path, 'schema_version: "1"\n'))]) == 2
    assert main(["compare", "--preset", "lambda-sec331"]) == 2
    blocker = _write(tmp_path, "x", "file")
    assert main(["thresholds", "--out", str(blocker / "sub")]) == 2


def test_cli_numerical_failure_exits_3(tmp_path):
    # a huge release overflows the sterile compartment within a few steps
    doc = {"schema_version": "1",
           "scenario": {"controller": {"type": "constant", "ubar": 1e308}, "t_final": 5, "step": 1.0}}
    path = _write(tmp_path, yaml.safe_dump(doc))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 3


def test_cli_certify_small(tmp_path, capsys):
    doc = {"schema_version": "1", "certify": {"n_states": 100, "n_trajectories": 3, "t_final": 10, "step": 0.05}}
    path = _write(tmp_path, yaml.safe_dump(doc))
    assert main(["certify", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out
