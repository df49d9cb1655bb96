import csv
import json

import pytest

from eulerlab import cli
from eulerlab.experiments import EXPERIMENTS, run_experiment


def _run(argv):
    return cli.main(argv)


def test_optimality_end_to_end(tmp_path, capsys):
    assert _run(["optimality", "--out", str(tmp_path)]) == 0
    d = tmp_path / "optimality"
    rep = json.loads((d / "report.json").read_text())
    assert rep["passed"] and {r["criterion"] for r in rep["rows"]} == {4}
    assert (d / "certificate.csv").exists() and (d / "rows.csv").exists()
    assert "PASS" in capsys.readouterr().out


def test_linear_decay_outputs(tmp_path):
    assert _run(["linear-decay", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "linear-decay" / "decay.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "t" and len(rows) == 41


def test_unknown_experiment_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        _run(["warp-drive"])
    assert exc.value.code == 2


def test_malformed_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"t_min": -3}}))
    assert _run(["optimality", "--config", str(cfg)]) == 2
    assert "params.t_min" in capsys.readouterr().err


def test_unparseable_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert _run(["optimality", "--config", str(cfg)]) == 2


def test_unknown_parameter(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[params]\nwarp = 9\n")
    assert _run(["optimality", "--config", str(cfg)]) == 2
    assert "params.warp" in capsys.readouterr().err


def test_experiment_mismatch(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "blowup"}))
    assert _run(["optimality", "--config", str(cfg)]) == 2


def test_toml_config_and_flags(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 3\n[params]\nn_times = 12\n')
    assert _run(["optimality", "--config", str(cfg), "--gamma", "2.0", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "optimality" / "report.json").read_text())
    assert rep["measured"]["gamma"] == 2.0


def test_flag_not_applicable(capsys):
    assert _run(["linear-decay", "--paper-example"]) == 2
    assert _run(["optimality", "--grid", "32"]) == 2


def test_failing_rows_exit_1(tmp_path):
    # outside the fit tolerance: window too early for the asymptotic rate
    assert _run(["linear-decay", "--config", str(_cfg(tmp_path, {"t_min": 0.01, "t_max": 0.5})),
                 "--out", str(tmp_path)]) == 1


def test_runtime_error_exit_3(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise FloatingPointError("solution blew up")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert _run(["optimality", "--out", str(tmp_path)]) == 3
    assert "FloatingPointError" in capsys.readouterr().err


def _cfg(tmp_path, params):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"params": params}))
    return p


def test_determinism(tmp_path):
    small = {"n_eigen": 200, "n_parseval": 5, "n_interp": 5}
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run(["green-table", "--config", str(_cfg(tmp_path, small)), "--seed", "7", "--out", str(d)]) == 0
    for name in ("rows.csv", "green_blocks.csv"):
        assert (a / "green-table" / name).read_bytes() == (b / "green-table" / name).read_bytes()


def test_regress(tmp_path, capsys):
    gold, rep = tmp_path / "gold", tmp_path / "rep"
    run_experiment("optimality").write(gold)
    run_experiment("optimality").write(rep)
    assert _run(["regress", str(rep), str(gold)]) == 0

    rows = (rep / "optimality" / "rows.csv").read_text().splitlines()
    drifted = []
    for line in rows:
        if line.startswith("optimality,4,phi_lower_slope,"):
            parts = line.split(",")
            parts[4] = repr(float(parts[4]) + 0.1)
            line = ",".join(parts)
        drifted.append(line)
    drifted.append("optimality,,extra_quantity,1,1,,True")
    (rep / "optimality" / "rows.csv").write_text("\n".join(drifted) + "\n")
    capsys.readouterr()
    assert _run(["regress", str(rep), str(gold)]) == 1
    out = capsys.readouterr().out
    assert "DRIFT optimality/rows.csv:phi_lower_slope" in out
    assert "UNGOLDENED optimality/rows.csv:extra_quantity" in out


def test_regress_missing_golden(tmp_path):
    (tmp_path / "empty").mkdir()
    assert _run(["regress", str(tmp_path), str(tmp_path / "empty")]) == 2
    assert _run(["regress", str(tmp_path), str(tmp_path / "nope")]) == 2


def test_every_criterion_has_one_experiment():
    owners = {1: "green-table", 2: "green-table", 11: "green-table", 3: "linear-decay",
              4: "optimality", 5: "nonlinear-decay", 6: "nonlinear-decay",
              7: "blowup", 8: "blowup", 9: "blowup", 10: "parabolic"}
    assert set(owners.values()) <= set(EXPERIMENTS)
    fast = {name: run_experiment(name) for name in ("green-table", "linear-decay", "optimality")}
    for name, res in fast.items():
        crits = {r.criterion for r in res.rows}
        assert crits == {c for c, o in owners.items() if o == name}
        quantities = [r.quantity for r in res.rows]
        assert len(quantities) == len(set(quantities))
