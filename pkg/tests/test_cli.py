import csv
import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest

from distsynth.cli import main, parse_periods

SPELLS = """person_id,unit_id,start_date,end_date,title_level
p1,A,2021-01-01,,3
p2,A,2021-06-01,2022-02-15,senior
p3,A,2020-03-01,,4
p4,B,2020-01-01,,2
p5,B,2022-01-10,,5
p6,C,2019-05-05,2022-05-01,manager
p7,C,2021-11-11,,1
"""


@pytest.fixture(scope="module")
def null_panel(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--preset", "null-dgp", "--seed", "3", "--n", "400", "--out-dir", str(out)]) == 0
    return out / "panel.csv"


def run(*argv):
    return main([str(a) for a in argv])


def test_parse_periods():
    assert parse_periods("1-3,6") == (1, 2, 3, 6)
    assert parse_periods([2, 1]) == (2, 1)
    assert parse_periods(None) == ()


def test_usage_errors(capsys):
    assert run("estimate", "--bogus") == 1
    assert run() == 1
    capsys.readouterr()


def test_missing_required_flags(null_panel, capsys):
    assert run("estimate", "--input", null_panel, "--pre-periods", "1-3") == 1
    assert "--treated" in capsys.readouterr().err
    assert run("estimate", "--input", null_panel, "--treated", "treated") == 1


def test_missing_input_is_data_error(tmp_path, capsys):
    assert run("estimate", "--input", tmp_path / "none.csv", "--treated", "T", "--pre-periods", "1") == 2


def test_ingest_spells(tmp_path):
    src = tmp_path / "spells.csv"
    src.write_text(SPELLS)
    assert run("ingest", "--input", src, "--quarters", "2022Q1:2022Q2", "--out-dir", tmp_path / "t") == 0
    rows = list(csv.DictReader(open(tmp_path / "t" / "panel.csv")))
    assert {r["unit"] for r in rows} == {"A", "B", "C"}
    summary = json.loads((tmp_path / "t" / "summary.json").read_text())
    assert summary["units"]["A"]["counts"]["1"] == 3
    assert summary["outcome_kind"] == "continuous"
    assert run("ingest", "--input", src, "--quarters", "2022Q1:2022Q2", "--outcome", "title",
               "--out-dir", tmp_path / "o") == 0
    values = {float(r["outcome"]) for r in csv.DictReader(open(tmp_path / "o" / "panel.csv"))}
    assert values <= set(range(1, 11))


def test_ingest_malformed_row(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text(SPELLS + "p9,B,not-a-date,,2\n")
    assert run("ingest", "--input", src, "--quarters", "2022Q1:2022Q2", "--out-dir", tmp_path) == 2
    assert "line 9" in capsys.readouterr().err


def test_ingest_min_share(tmp_path):
    src = tmp_path / "spells.csv"
    src.write_text(SPELLS)
    assert run("ingest", "--input", src, "--quarters", "2022Q1:2022Q2", "--treated", "A", "--min-share", "0.1",
               "--out-dir", tmp_path) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["dropped_donors"] == []


def test_estimate_null_effects_small(null_panel, tmp_path):
    assert run("estimate", "--input", null_panel, "--treated", "treated", "--pre-periods", "1-3",
               "--post-periods", "4-6", "--grid-size", "200", "--out-dir", tmp_path) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert abs(sum(fit["averaged_weights"]["weights"]) - 1) < 1e-12
    rows = list(csv.reader(open(tmp_path / "effects" / "effect_t4.csv")))
    assert rows[0] == ["axis", "observed", "counterfactual", "effect"]
    eff = np.array([float(r[3]) for r in rows[1:]])
    assert len(eff) == 201
    assert np.median(np.abs(eff)) < 0.5


def test_estimate_q_max_restricts(null_panel, tmp_path):
    assert run("estimate", "--input", null_panel, "--treated", "treated", "--pre-periods", "1-3",
               "--q-max", "0.9", "--grid-size", "100", "--out-dir", tmp_path) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["spec"]["q_max"] == 0.9


def test_estimate_missing_cell(tmp_path, capsys):
    src = tmp_path / "p.csv"
    src.write_text("unit,period,outcome\nT,1,1\nT,2,1\nA,1,2\nA,2,2\nB,1,0\n")
    assert run("estimate", "--input", src, "--treated", "T", "--pre-periods", "1", "--post-periods", "2") == 2
    assert "unit 'B', period 2" in capsys.readouterr().err


def test_config_file_and_override(null_panel, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"input": str(null_panel), "treated": "treated", "pre_periods": "1-3",
                               "post_periods": [4, 5, 6], "grid_size": 50, "out_dir": str(tmp_path / "a")}))
    assert run("estimate", "--config", cfg) == 0
    assert json.loads((tmp_path / "a" / "fit.json").read_text())["spec"]["grid_size"] == 50
    assert run("estimate", "--config", cfg, "--grid-size", "40", "--out-dir", tmp_path / "b") == 0
    assert json.loads((tmp_path / "b" / "fit.json").read_text())["spec"]["grid_size"] == 40


def test_bad_config(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text("{not json")
    assert run("estimate", "--config", cfg) == 1


def test_donors_file(null_panel, tmp_path):
    donors = tmp_path / "donors.txt"
    donors.write_text("D1\nD2\n# comment\nD3\n")
    assert run("estimate", "--input", null_panel, "--treated", "treated", "--donors-file", donors,
               "--pre-periods", "1-3", "--grid-size", "50", "--out-dir", tmp_path) == 0
    assert json.loads((tmp_path / "fit.json").read_text())["spec"]["donors"] == ["D1", "D2", "D3"]
    donors.write_text("D1\nZZ\n")
    assert run("estimate", "--input", null_panel, "--treated", "treated", "--donors-file", donors,
               "--pre-periods", "1-3") == 2


def test_permute_prints_p(null_panel, tmp_path, capsys):
    assert run("permute", "--input", null_panel, "--treated", "treated", "--pre-periods", "1-3",
               "--post-periods", "4-6", "--grid-size", "100", "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    p = float(out.strip().split()[-1])
    assert p == json.loads((tmp_path / "permutation.json").read_text())["p_value"]
    assert p in {k / 10 for k in range(1, 11)}


def test_bootstrap_outputs_and_determinism(null_panel, tmp_path):
    args = ["bootstrap", "--input", null_panel, "--treated", "treated", "--pre-periods", "1-3",
            "--post-periods", "4-6", "--grid-size", "50", "--draws", "30", "--seed", "9", "--pointwise"]
    assert run(*args, "--threads", "1", "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--threads", "3", "--out-dir", tmp_path / "b") == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert filecmp.cmp(tmp_path / "a" / "bands" / "effect_t5.csv", tmp_path / "b" / "bands" / "effect_t5.csv",
                       shallow=False)
    header = next(csv.reader(open(tmp_path / "a" / "bands" / "effect_t5.csv")))
    assert header == ["axis", "center", "lower", "upper", "pointwise_lower", "pointwise_upper"]
    bands = json.loads((tmp_path / "a" / "bands.json").read_text())
    assert bands["draws_requested"] == 30 and bands["mode"] == "with-replacement"


def test_bootstrap_defaults_and_mode(null_panel, tmp_path):
    assert run("bootstrap", "--input", null_panel, "--treated", "treated", "--pre-periods", "1-3",
               "--grid-size", "20", "--draws", "5", "--mode", "paper-literal", "--out-dir", tmp_path) == 0
    bands = json.loads((tmp_path / "bands.json").read_text())
    assert bands["mode"] == "paper-literal" and bands["alpha"] == 0.05
    from distsynth.cli import _DEFAULTS

    assert _DEFAULTS["draws"] == 1000 and _DEFAULTS["alpha"] == 0.05
    assert run("bootstrap", "--input", null_panel, "--treated", "treated", "--pre-periods", "1-3",
               "--alpha", "1.5") == 1


def test_simulate_spec_round_trip(tmp_path):
    assert run("simulate", "--preset", "ordinal-mass-shift", "--n", "50", "--out-dir", tmp_path / "a") == 0
    assert run("simulate", "--spec", tmp_path / "a" / "simspec.json", "--out-dir", tmp_path / "b") == 0
    assert filecmp.cmp(tmp_path / "a" / "panel.csv", tmp_path / "b" / "panel.csv", shallow=False)
    assert run("simulate", "--spec", tmp_path / "a" / "simspec.json", "--seed", "1", "--out-dir", tmp_path / "c") == 0
    assert not filecmp.cmp(tmp_path / "a" / "panel.csv", tmp_path / "c" / "panel.csv", shallow=False)
    assert run("simulate", "--out-dir", tmp_path) == 1


def test_diagnose_duplicate_donor(tmp_path, capsys):
    g = np.random.default_rng(0)
    rows = ["unit,period,outcome"]
    for t in (1, 2):
        x = g.normal(size=100)
        for u, vals in [("T", g.normal(size=100)), ("A", x), ("B", x), ("C", g.normal(1, size=100))]:
            rows += [f"{u},{t},{float(v)!r}" for v in vals]
    src = tmp_path / "p.csv"
    src.write_text("\n".join(rows) + "\n")
    assert run("diagnose", "--input", src, "--treated", "T", "--pre-periods", "1-2", "--out-dir", tmp_path) == 0
    report = json.loads((tmp_path / "diagnostics.json").read_text())
    assert report["any_warning"]
    assert "degenerate" in capsys.readouterr().out


def test_ordinal_estimate(tmp_path):
    assert run("simulate", "--preset", "ordinal-mass-shift", "--n", "2000", "--out-dir", tmp_path) == 0
    assert run("estimate", "--input", tmp_path / "panel.csv", "--treated", "treated", "--outcome", "ordinal",
               "--pre-periods", "1-2", "--post-periods", "3-4", "--out-dir", tmp_path) == 0
    rows = list(csv.reader(open(tmp_path / "effects" / "effect_t3.csv")))
    assert [float(r[0]) for r in rows[1:]] == [1, 2, 3, 4, 5, 6]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "distsynth", "simulate", "--preset", "null-dgp", "--n", "10",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "truth.json").exists()
