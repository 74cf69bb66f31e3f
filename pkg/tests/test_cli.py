import csv

import numpy as np
import pytest

from l0filter.cli import ConfigError, main, parse_config


def run(*args):
    return main([str(a) for a in args])


def test_generate(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert run("generate", "--case", "i", "--seed", 7, "--out", out) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 101 and all(len(r) == 3 for r in rows)
    assert "m=100 n=2 k=2" in capsys.readouterr().out
    first = out.read_bytes()
    assert run("generate", "--case", "i", "--seed", 7, "--out", out) == 0
    assert out.read_bytes() == first


def test_generate_bad_case(tmp_path, capsys):
    assert run("generate", "--case", "ix", "--out", tmp_path / "x.csv") == 2
    assert "invalid choice" in capsys.readouterr().err


@pytest.fixture(scope="module")
def case_i_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("d") / "case_i.csv"
    assert main(["generate", "--case", "i", "--seed", "7", "--out", str(p)]) == 0
    return p


def test_filter_l0(case_i_csv, tmp_path):
    out = tmp_path / "f"
    assert run("filter", case_i_csv, "--label-col", -1, "--method", "l0", "--grid-size", 10, "--out", out) == 0
    assert len(list(out.glob("centroids_*.csv"))) == 10
    rows = list(csv.DictReader((out / "trace.csv").open()))
    lams = sorted({r["lambda"] for r in rows})
    assert len(lams) == 10
    finals = {}
    for r in rows:
        finals[r["lambda"]] = r
    assert all(float(r["alpha"]) == 1e3 and float(r["grad_norm"]) <= 1e-5 for r in finals.values())
    prof = list(csv.reader((out / "alpha_profile.csv").open()))
    assert prof[0] == ["alpha", "mean_seconds"] and len(prof) == 17


def test_filter_ridge_lambda_zero(case_i_csv, tmp_path):
    from l0filter.data import load_csv, scale_dataset
    out = tmp_path / "r"
    assert run("filter", case_i_csv, "--label-col", -1, "--method", "ridge", "--lambda", 0, "--out", out) == 0
    z = np.loadtxt(out / "centroids_000.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(z, scale_dataset(load_csv(case_i_csv, -1)).points)


def test_filter_missing_input(tmp_path):
    assert run("filter", tmp_path / "nope.csv", "--out", tmp_path / "o") == 2


def test_cluster_verbs(case_i_csv, tmp_path, capsys):
    for method in ("baseline", "km5", "l0"):
        out = tmp_path / method
        assert run("cluster", case_i_csv, "--label-col", -1, "--k", 2, "--method", method,
                   "--algorithm", "SL", "--lambda", 0, "--lambda", 0.005, "--out", out) == 0
        assert (out / "partition.csv").exists()
    assert "ARI" in capsys.readouterr().out
    assert run("cluster", case_i_csv, "--k", 1, "--out", tmp_path / "x") == 2


def test_timing(case_i_csv, tmp_path):
    out = tmp_path / "t"
    assert run("timing", case_i_csv, "--label-col", -1, "--lambda", 0.001, "--lambda", 0.01, "--out", out) == 0
    rows = list(csv.reader((out / "lambda_times.csv").open()))
    assert rows[0] == ["lambda", "seconds", "stages"] and len(rows) == 3


CONFIG = """
grid_size = 4
restarts = 3
seeds = 0
methods = baseline, l0, ridge, km5, km10, km20
algorithms = SL, EMGM, KKM

[dataset]
name = tiny
case = i
k = 2
"""


def test_parse_config(tmp_path):
    cfg = parse_config(CONFIG)
    assert cfg.grid_size == 4 and cfg.seeds == (0,) and cfg.datasets[0].case == "i"
    with pytest.raises(ConfigError):
        parse_config(CONFIG.replace("methods = baseline, l0, ridge, km5, km10, km20", "methods ="))
    with pytest.raises(ConfigError):
        parse_config(CONFIG + "bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config(CONFIG.replace("case = i", "case = q"))
    with pytest.raises(ConfigError):
        parse_config("grid_size = 3\n")
    with pytest.raises(ConfigError):
        parse_config(CONFIG + "[dataset]\nname = f\npath = missing.csv\nk = 2\n")


def test_bench_empty_methods(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CONFIG.replace("baseline, l0, ridge, km5, km10, km20", ""))
    assert run("bench", "--config", cfg, "--out", tmp_path / "o") == 2


def test_bench_table(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CONFIG.replace("case = i", "case = i\n") + "\n[dataset]\nname = iris\npath = "
                   + str((__import__("pathlib").Path(__file__).parents[1] / "data/uci/iris.data"))
                   + "\nlabel_col = -1\nk = 3\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run("bench", "--config", cfg, "--out", out1) == 0
    rows = list(csv.reader((out1 / "ari_table.csv").open()))
    assert rows[0] == ["method", "tiny", "iris"]
    assert len(rows) == 19
    assert [r[0] for r in rows[1:7]] == ["SL", "l0+SL", "ridge+SL", "km5+SL", "km10+SL", "km20+SL"]
    text = (out1 / "ari_table.txt").read_text().splitlines()
    assert len(text) == 19
    assert (out1 / "trace.csv").exists() and (out1 / "alpha_profile_tiny.csv").exists()
    cells = list(csv.DictReader((out1 / "cells.csv").open()))
    assert len(cells) == 36 and all(c["seed"] == "0" for c in cells)
    assert run("bench", "--config", cfg, "--out", out2) == 0
    assert (out1 / "ari_table.csv").read_bytes() == (out2 / "ari_table.csv").read_bytes()
