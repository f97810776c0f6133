import csv
import json

import pytest
from click.testing import CliRunner

from ftlab.cli import main


def run(*args, env=None):
    return CliRunner().invoke(main, list(args), env=env, catch_exceptions=False)


def rows(result):
    return [json.loads(line) for line in result.output.splitlines() if line.strip()]


def test_bounds_command():
    res = run("bounds", "--name", "good_code", "--p", "0", "--q", "0.01", "--c", "32")
    assert res.exit_code == 0
    row = rows(res)[0]
    assert row["metrics"]["value"]["value"] == pytest.approx(0.7171189149163586)
    assert row["flags"]["valid"]


def test_unknown_bound_is_config_error():
    assert run("bounds", "--name", "nope").exit_code == 2


def test_bad_level_is_config_error():
    assert run("interface-failure", "--level", "3", "--p", "0.001").exit_code == 2


def test_budget_error_exit_code():
    res = run("shannon", "--kind", "packing", "--n", "12", "--codebooks", "1")
    assert res.exit_code == 3


def test_interface_failure_is_deterministic():
    args = ("interface-failure", "--p", "0.001", "--trials", "500", "--no-exact", "--seed", "4")
    a, b = rows(run(*args))[0], rows(run(*args))[0]
    assert a["metrics"] == b["metrics"]


def test_seed_from_environment():
    args = ("effective-channel", "--p", "0.002", "--trials", "500")
    a = rows(run(*args, env={"FTLAB_SEED": "9"}))[0]
    b = rows(run(*args, "--seed", "9"))[0]
    assert a["metrics"] == b["metrics"]
    assert a["params"]["seed"] == 9


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[capacity]\nkind = "holevo_cq"\nchannel = "orthogonal"\n')
    res = run("capacity", "--config", str(cfg))
    assert rows(res)[0]["metrics"]["value"]["value"] == pytest.approx(1.0, abs=1e-6)
    res = run("capacity", "--config", str(cfg), "--channel", "trivial")
    assert rows(res)[0]["metrics"]["value"]["value"] == pytest.approx(0.0, abs=1e-9)


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("bogus = 1\n")
    assert run("capacity", "--config", str(cfg), "--kind", "holevo_cq", "--channel", "trivial").exit_code == 2


def test_csv_and_output_files(tmp_path):
    out, table = tmp_path / "r.jsonl", tmp_path / "r.csv"
    res = run("capacity", "--kind", "holevo_cq", "--channel", "zero_plus", "--output", str(out), "--csv", str(table))
    assert res.exit_code == 0 and res.output == ""
    assert json.loads(out.read_text())["experiment"] == "capacity"
    with open(table) as fh:
        got = list(csv.DictReader(fh))
    assert float(got[0]["value"]) == pytest.approx(0.6008760366928561, abs=1e-8)


def test_plot_data_points():
    res = run("interface-failure", "--p", "0.001", "--trials", "300", "--no-exact", "--plot-data")
    point = rows(res)[0]
    assert set(point) >= {"x", "y", "yerr"}


def test_end_to_end_runs():
    res = run("end-to-end", "--p", "0", "--q", "0.02", "--blocks", "200")
    row = rows(res)[0]
    assert row["experiment"] == "end-to-end"
    assert "eps_cl" in row["metrics"]


def test_help_lists_every_experiment():
    res = run("--help")
    for name in ("interface-failure", "effective-channel", "threshold-scan", "exrec-audit", "bounds", "capacity", "shannon", "end-to-end"):
        assert name in res.output
