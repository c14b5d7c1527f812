import csv
import json
from importlib import resources

import pytest
from jsonschema import Draft202012Validator

from distsynth.cli import main

SPELLS = "person_id,unit_id,start_date,end_date,title_level\np1,A,2021-01-01,,3\np2,B,2020-01-01,,2\np3,C,2021-02-02,,1\n"


def schema(name):
    text = resources.files("distsynth").joinpath("schemas", f"{name}.schema.json").read_text()
    s = json.loads(text)
    Draft202012Validator.check_schema(s)
    return Draft202012Validator(s)


def layouts():
    return json.loads(resources.files("distsynth").joinpath("schemas", "csv_layouts.json").read_text())


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    root = tmp_path_factory.mktemp("out")
    sims = {}
    for preset in ("null-dgp", "top-quantile-shift", "ordinal-mass-shift"):
        d = root / preset
        assert main(["simulate", "--preset", preset, "--n", "200", "--out-dir", str(d)]) == 0
        sims[preset] = d
    panel = str(sims["null-dgp"] / "panel.csv")
    base = ["--input", panel, "--treated", "treated", "--pre-periods", "1-3", "--post-periods", "4-6",
            "--grid-size", "40"]
    assert main(["estimate", *base, "--out-dir", str(root / "est")]) == 0
    assert main(["permute", *base, "--out-dir", str(root / "perm")]) == 0
    assert main(["bootstrap", *base, "--draws", "10", "--pointwise", "--out-dir", str(root / "boot")]) == 0
    assert main(["diagnose", *base, "--out-dir", str(root / "diag")]) == 0
    spells = root / "spells.csv"
    spells.write_text(SPELLS)
    assert main(["ingest", "--input", str(spells), "--quarters", "2022Q1:2022Q2", "--out-dir", str(root / "ing")]) == 0
    return root, sims


@pytest.mark.parametrize("preset", ["null-dgp", "top-quantile-shift", "ordinal-mass-shift"])
def test_simulation_outputs(outputs, preset):
    _, sims = outputs
    d = sims[preset]
    for name in ("truth", "simspec"):
        errors = list(schema(name).iter_errors(json.loads((d / f"{name}.json").read_text())))
        assert not errors, errors
    assert header(d / "panel.csv") == layouts()["panel"]


def test_null_truth_has_no_mixture(outputs):
    _, sims = outputs
    truth = json.loads((sims["null-dgp"] / "truth.json").read_text())
    assert truth["mixture"] is None


@pytest.mark.parametrize("sub, name", [("est", "fit"), ("perm", "permutation"), ("boot", "bands"),
                                       ("diag", "diagnostics"), ("ing", "summary")])
def test_json_outputs(outputs, sub, name):
    root, _ = outputs
    doc = json.loads((root / sub / f"{name}.json").read_text())
    errors = list(schema(name).iter_errors(doc))
    assert not errors, errors


def test_csv_layouts(outputs):
    root, _ = outputs
    lay = layouts()
    effects = sorted((root / "est" / "effects").glob("*.csv"))
    assert [p.name for p in effects] == [f"effect_t{t}.csv" for t in range(1, 7)]
    for p in effects:
        assert header(p) == lay["effect"]
    bands = sorted((root / "boot" / "bands").glob("*.csv"))
    assert bands
    for p in bands:
        assert header(p) == lay["band_pointwise"]
    assert header(root / "ing" / "panel.csv") == lay["panel"]


def test_schema_rejects_bad_document():
    assert list(schema("permutation").iter_errors({"p_value": "high"}))
