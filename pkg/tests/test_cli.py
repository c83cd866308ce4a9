import io
import json

import numpy as np
import pytest

from ampcausal import cli
from ampcausal.graph import check_tiers, parse_dot_edges, Dag
from ampcausal.tabular import dataset_from_columns, load_csv, write_csv, write_manifest

FAST = """\
# reduced learners for quick runs
forest_trees = 20
outcome_epochs = 10
slearner_epochs = 20
oracle_n = 2000
folds = 3
"""


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def ota(tmp_path_factory):
    root = tmp_path_factory.mktemp("ota")
    code, _, err = run("generate", "ota", "--n", 3000, "--seed", 7, "--out", root / "data")
    assert code == 0, err
    (root / "fast.cfg").write_text(FAST)
    return root


def common(root, out="out", *extra):
    return [
        "--data", root / "data" / "ota.csv",
        "--manifest", root / "data" / "ota.manifest",
        "--config", root / "fast.cfg",
        "--out", root / out,
        *extra,
    ]


@pytest.fixture(scope="module")
def estimated(ota):
    code, text, err = run("estimate", *common(ota))
    assert code == 0, err
    return ota, text


# --- generate ----------------------------------------------------------------------


@pytest.mark.parametrize("model,rows", [("ota", 20_000), ("folded", 38_000)])
def test_generate_default_sizes(tmp_path, model, rows):
    code, _, err = run("generate", model, "--seed", 7, "--out", tmp_path)
    assert code == 0, err
    d = load_csv(tmp_path / f"{model}.csv", tmp_path / f"{model}.manifest")
    assert d.row_count == rows
    if model == "ota":
        assert d.col_count == 8
    side = (tmp_path / f"{model}.provenance").read_text()
    for key in ("model", "seed", "n", "rho", "spread"):
        assert f"{key} = " in side


def test_generate_twice_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert run("generate", "telescopic", "--n", 500, "--seed", 3, "--out", tmp_path / sub)[0] == 0
    for name in ("telescopic.csv", "telescopic.manifest", "telescopic.provenance"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_unknown_model(tmp_path):
    code, out, err = run("generate", "cascode", "--out", tmp_path)
    assert code != 0 and out == ""
    assert err.startswith("error:config:") and err.count("\n") == 1


def test_generate_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run("generate", "ota", "--n", 10, "--out", blocker / "sub")
    assert code != 0 and err.startswith("error:")


# --- discover ----------------------------------------------------------------------


def test_discover_writes_tier_respecting_dot(ota):
    code, text, err = run("discover", *common(ota, "disc"))
    assert code == 0, err
    dot = (ota / "disc" / "dag.dot").read_text()
    edges = parse_dot_edges(dot)
    assert edges
    rep = json.loads((ota / "disc" / "discovery.json").read_text())
    roles = {n: load_csv(ota / "data" / "ota.csv", ota / "data" / "ota.manifest").role(n) for n in rep["nodes"]}
    assert check_tiers(Dag(rep["nodes"], edges, roles)) == []
    graph = json.loads((ota / "disc" / "dag.json").read_text())
    assert {(e["from"], e["to"]) for e in graph["edges"]} == set(edges)
    assert text.startswith(f"{len(edges)} edges over 8 nodes")


def test_discover_rerun_is_byte_identical(ota):
    for sub in ("r1", "r2"):
        assert run("discover", *common(ota, sub), "--no-cache")[0] == 0
    for name in ("dag.dot", "dag.json", "discovery.json", "discovery.txt"):
        assert (ota / "r1" / name).read_bytes() == (ota / "r2" / name).read_bytes()


def test_discover_independent_columns(tmp_path):
    rng = np.random.default_rng(0)
    d = dataset_from_columns(
        {"a": rng.standard_normal(2000), "b": rng.standard_normal(2000), "y": rng.standard_normal(2000)},
        {"a": "parameter", "b": "parameter", "y": "outcome"},
    )
    write_csv(tmp_path / "x.csv", d)
    write_manifest(tmp_path / "x.manifest", d)
    code, text, err = run("discover", "--data", tmp_path / "x.csv", "--manifest", tmp_path / "x.manifest", "--out", tmp_path / "o")
    assert code == 0, err
    assert text.startswith("0 edges")


def test_discover_formats(ota):
    code, text, _ = run("discover", *common(ota, "fmt"), "--format", "json")
    assert code == 0 and "edges" in json.loads(text)
    code, text, _ = run("discover", *common(ota, "fmt"), "--format", "dot")
    assert code == 0 and text.startswith("digraph")


# --- estimate ----------------------------------------------------------------------


def test_estimate_report_shape(estimated):
    root, text = estimated
    lines = text.splitlines()
    body = [l for l in lines[3:] if l and not l.startswith("notice")]
    assert [l.split()[0] for l in body[:5]] == ["Idc", "W_DP", "W_PMOS", "W_CM", "L"]
    assert body[5].startswith("Avg. of Absolute Values")
    assert body[5].count("%") == 2
    eff = json.loads((root / "out" / "effects.json").read_text())
    assert eff["oracle"] and len(eff["parameters"]) == 5
    assert set(eff["summary"]) == {"dml", "slearner"}
    assert (root / "out" / "effects.txt").read_text() == text


def test_estimate_treatment_subset(ota):
    code, text, err = run("estimate", *common(ota, "sub"), "--treatments", "Idc", "--format", "json")
    assert code == 0, err
    assert [r["parameter"] for r in json.loads(text)["parameters"]] == ["Idc"]


def test_estimate_without_sidecar_degrades(ota, tmp_path):
    for name in ("ota.csv", "ota.manifest"):
        (tmp_path / name).write_bytes((ota / "data" / name).read_bytes())
    code, text, err = run(
        "estimate", "--data", tmp_path / "ota.csv", "--manifest", tmp_path / "ota.manifest",
        "--config", ota / "fast.cfg", "--out", tmp_path / "o", "--treatments", "Idc,L",
    )
    assert code == 0, err
    assert "Oracle" not in text and "notice:" in text
    eff = json.loads((tmp_path / "o" / "effects.json").read_text())
    assert not eff["oracle"] and "oracle_ate" not in eff["parameters"][0]


def test_estimate_unknown_treatment(ota):
    code, _, err = run("estimate", *common(ota, "bad"), "--treatments", "W_XX")
    assert code != 0 and err.startswith("error:config:") and "W_XX" in err


# --- rank and whatif reuse cached models --------------------------------------------


@pytest.fixture
def no_training(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("model was retrained")

    monkeypatch.setattr(cli, "dml_ate", boom)
    monkeypatch.setattr(cli, "fit_slearner", boom)
    monkeypatch.setattr(cli, "discover", boom)


def test_rank_reuses_cache(estimated, no_training):
    root, _ = estimated
    code, text, err = run("rank", *common(root))
    assert code == 0, err
    lines = text.splitlines()[1:]
    assert len(lines) == 5
    eff = json.loads((root / "out" / "effects.json").read_text())
    by_size = sorted(eff["parameters"], key=lambda r: (-abs(r["dml_ate"]), r["parameter"]))
    assert [l.split()[1] for l in lines] == [r["parameter"] for r in by_size]
    assert all(("↑ knob raises outcome" in l) != ("↓ lowers" in l) for l in lines)


def test_rank_without_estimates_is_an_error(ota, tmp_path):
    code, _, err = run("rank", *common(ota, tmp_path.name + "-empty"))
    assert code != 0 and err.startswith("error:data:")


def test_whatif_reuses_cache_and_reports(estimated, no_training):
    root, _ = estimated
    d = load_csv(root / "data" / "ota.csv", root / "data" / "ota.manifest")
    median = float(np.median(d.column("W_PMOS")))
    code, text, err = run("whatif", "W_PMOS", repr(median), *common(root), "--format", "json")
    assert code == 0, err
    rec = json.loads(text)
    assert rec["warning"] is None and rec["n"] == 3000
    assert rec["expected"] == pytest.approx(d.column("AC_Gain").mean(), abs=0.1)
    assert {"oracle_mean", "oracle_se", "sd"} <= set(rec)


def test_whatif_extrapolation_warning(estimated):
    root, _ = estimated
    code, text, _ = run("whatif", "W_PMOS", "2e-4", *common(root))
    assert code == 0
    assert "warning: extrapolation" in text


def test_whatif_unknown_parameter(estimated):
    root, _ = estimated
    code, _, err = run("whatif", "W_XX", "1.0", *common(root))
    assert code != 0 and err.startswith("error:config:")


OTA_IMPACT = {"Idc": -0.313, "W_DP": 0.1, "W_PMOS": 0.23, "W_CM": -0.07, "L": 0.46}


@pytest.mark.parametrize(
    "values,order",
    [
        (OTA_IMPACT, ["L", "Idc", "W_PMOS", "W_DP", "W_CM"]),
        ({"only": -1.0}, ["only"]),
        ({"b": 0.5, "a": -0.5}, ["a", "b"]),
    ],
)
def test_rank_injected_values(tmp_path, values, order):
    path = tmp_path / "ate.json"
    path.write_text(json.dumps(values))
    code, text, err = run("rank", "--estimates", path)
    assert code == 0, err
    lines = text.splitlines()[1:]
    assert [l.split()[1] for l in lines] == order
    assert lines[0].startswith("1. ")


# --- configuration and errors --------------------------------------------------------


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("alpha = 0.2\nfolds = 4\n")
    args = cli.build_parser().parse_args(["discover", "--config", str(cfg), "--alpha", "0.05"])
    rc = cli.build_config(args)
    assert rc.alpha == 0.05 and rc.folds == 4


def test_config_file_errors(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run("discover", "--config", cfg)
    assert code != 0 and err.startswith("error:config:") and "colour" in err
    cfg.write_text("folds = many\n")
    assert run("discover", "--config", cfg)[2].startswith("error:config:")


@pytest.mark.parametrize("flag,value", [("--alpha", "1.5"), ("--delta", "-1"), ("--folds", "1")])
def test_invalid_settings(ota, flag, value):
    code, out, err = run("discover", *common(ota, "inv"), flag, value)
    assert code != 0 and out == ""
    assert err.startswith("error:config:") and err.count("\n") == 1


def test_missing_data_file(tmp_path):
    code, _, err = run("discover", "--data", tmp_path / "nope.csv", "--manifest", tmp_path / "nope.manifest")
    assert code != 0 and err.startswith("error:config:") and "not found" in err


def test_malformed_csv_reports_format_category(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2,3\n")
    (tmp_path / "x.manifest").write_text("a,parameter\nb,outcome\n")
    code, _, err = run("discover", "--data", tmp_path / "x.csv", "--manifest", tmp_path / "x.manifest", "--out", tmp_path)
    assert code != 0 and err.startswith("error:")
    assert err.split(":")[1] == "format"
