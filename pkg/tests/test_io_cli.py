import csv
import json
from pathlib import Path

import numpy as np
import pytest

from epdkit import io_utils
from epdkit.cli import main


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture
def toy_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 50
    X = rng.standard_normal((n, 3))
    y = X @ [1.0, -0.5, 0.0] + 0.6 * rng.standard_normal(n)
    path = tmp_path / "toy.csv"
    write_rows(path, ["y", "x1", "x2", "x3"],
               [[y[i], *X[i]] for i in range(n)])
    return path


def test_csv_round_trip_lossless(tmp_path):
    vals = [1.0 / 3.0, np.pi, 1e-15, 123456.789012345678, -7.5e30]
    path = tmp_path / "nums.csv"
    io_utils.write_csv(path, ["v"], [[v] for v in vals])
    cols = io_utils.read_table(path, ["v"])
    back = io_utils.numeric_column(cols, "v")
    assert np.array_equal(back, np.asarray(vals))


def test_header_order_insensitive(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_rows(a, ["y", "x1"], [[1.0, 2.0], [3.0, 4.0]])
    write_rows(b, ["x1", "y"], [[2.0, 1.0], [4.0, 3.0]])
    pa, _ = io_utils.load_regression_csv(a, "y", ["x1"])
    pb, _ = io_utils.load_regression_csv(b, "y", ["x1"])
    assert np.array_equal(pa.design, pb.design)
    assert np.array_equal(pa.response, pb.response)


def test_missing_inputs_raise(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(io_utils.EmptyFileError):
        io_utils.read_table(empty, [])
    short = tmp_path / "short.csv"
    short.write_text("a,b\n1,\n")
    with pytest.raises(io_utils.NonNumericCellError):
        io_utils.read_table(short, ["a", "b"])
    ok = tmp_path / "ok.csv"
    write_rows(ok, ["a"], [[1.0]])
    with pytest.raises(io_utils.MissingColumnError):
        io_utils.read_table(ok, ["a", "zz"])


def test_binary_column_accepts_yes_no():
    cols = {"u": ["yes", "no", "1", "0.0"]}
    assert io_utils.binary_column(cols, "u").tolist() == [1.0, 0.0, 1.0, 0.0]
    with pytest.raises(io_utils.NonNumericCellError):
        io_utils.binary_column({"u": ["maybe"]}, "u")


def test_wage_loader_balanced(tmp_path):
    rng = np.random.default_rng(1)
    rows = []
    for i in range(15):
        bins = rng.integers(0, 2, size=8)
        for year in (1, 2):
            rows.append([i + 1, 6.5 + 0.1 * rng.standard_normal(),
                         12 + i % 7, 5 + year, 40 + i % 9 + year,
                         *bins.tolist()])
    path = tmp_path / "wage.csv"
    write_rows(path, ["id", "lwage", "ed", "exp", "wks", "union", "married",
                      "bluecol", "ind", "south", "smsa", "sex", "black"],
               rows)
    panel, pooled, names, info = io_utils.load_wage_panel(path)
    assert info["individuals"] == 15 and info["periods"] == 2
    assert panel.X.shape == (15, 2, 12)
    assert names[0] == "intercept"
    assert pooled.n == 30
    # drop one row: unbalanced panel must be rejected
    bad = tmp_path / "bad.csv"
    write_rows(bad, ["id", "lwage", "ed", "exp", "wks", "union", "married",
                     "bluecol", "ind", "south", "smsa", "sex", "black"],
               rows[:-1])
    with pytest.raises(ValueError):
        io_utils.load_wage_panel(bad)


def test_manifest_contains_version(tmp_path):
    path = tmp_path / "m.json"
    io_utils.write_manifest(path, {"seed": 3})
    payload = json.loads(path.read_text())
    assert payload["tool"] == "epdkit"
    assert payload["config"]["seed"] == 3
    assert "version" in payload


def test_cli_unknown_flag_exits_one():
    assert main(["simulate", "--no-such-flag"]) == 1
    assert main(["definitely-not-a-command"]) == 1
    assert main([]) == 1


def test_cli_fit_writes_outputs(tmp_path, toy_csv, capsys):
    out = tmp_path / "out"
    rc = main(["fit", "--data", str(toy_csv), "--response", "y",
               "--covariates", "x1,x2", "--estimator", "epd",
               "--out-dir", str(out)])
    assert rc == 0
    assert (out / "fit.csv").exists()
    assert (out / "fit_manifest.json").exists()


def test_cli_missing_file_exits_one(tmp_path):
    rc = main(["fit", "--data", str(tmp_path / "nope.csv"), "--response",
               "y", "--covariates", "x1", "--out-dir", str(tmp_path)])
    assert rc == 1


def test_cli_simulate_renders_figure(tmp_path):
    out = tmp_path / "sim"
    rc = main(["simulate", "--reps", "3", "--n", "60", "--delta", "0,0.093",
               "--scheme", "error", "--seed", "2", "--out-dir", str(out)])
    assert rc == 0
    for name in ("records.csv", "summary.csv", "criterion_vs_delta.png",
                 "simulate_manifest.json"):
        assert (out / name).exists(), name


def test_cli_config_file_defaults_and_overrides(tmp_path, toy_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("reps = 3\nn = 60\nseed = 9  # seed comment\n")
    out1 = tmp_path / "o1"
    rc = main(["simulate", "--config", str(cfg), "--out-dir", str(out1)])
    assert rc == 0
    manifest = json.loads((out1 / "simulate_manifest.json").read_text())
    assert manifest["config"]["reps"] == 3
    assert manifest["config"]["seed"] == 9
    # explicit flag wins over the config value
    out2 = tmp_path / "o2"
    rc = main(["simulate", "--config", str(cfg), "--reps", "2",
               "--out-dir", str(out2)])
    assert rc == 0
    manifest = json.loads((out2 / "simulate_manifest.json").read_text())
    assert manifest["config"]["reps"] == 2
    # unknown config key is a usage error
    bad = tmp_path / "bad.cfg"
    bad.write_text("not_a_flag = 1\n")
    assert main(["simulate", "--config", str(bad),
                 "--out-dir", str(tmp_path / "o3")]) == 1


def test_cli_tune_small_grid(tmp_path, toy_csv):
    out = tmp_path / "tune"
    rc = main(["tune", "--data", str(toy_csv), "--response", "y",
               "--covariates", "x1,x2", "--kind", "dpd",
               "--gammas", "0.2,0.4", "--out-dir", str(out)])
    assert rc == 0
    cols = io_utils.read_table(out / "tuning_table.csv",
                               ["alpha", "beta", "gamma", "score"])
    assert len(cols["score"]) == 2


def test_cli_influence_outputs(tmp_path):
    out = tmp_path / "infl"
    rc = main(["influence", "--seed", "4", "--n", "80",
               "--estimator", "epd", "--out-dir", str(out)])
    assert rc == 0
    manifest = json.loads((out / "influence_manifest.json").read_text())
    assert manifest["config"]["bounded"] is True
    assert (out / "influence.png").exists()
    assert (out / "influence_curve.csv").exists()
