import csv
import json
from pathlib import Path

import numpy as np
import pytest

from argstruct.cli import RunConfig, compat_log_odds, main
from argstruct.corpus import Document, Proposition, Scheme, load_corpus, save_corpus
from argstruct.features import fit_template
from argstruct.graph import VariantConfig
from argstruct.learning import Model, TrainingDiverged, check_corpus, load_model, save_model
from argstruct.weights import ModelWeights
from conftest import make_doc


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", str(d / "train.jsonl"), "--n-docs", "10", "--max-props", "4", "--seed", "1"]) == 0
    assert main(["synth", str(d / "test.jsonl"), "--n-docs", "6", "--max-props", "4", "--seed", "2"]) == 0
    assert main(["train", str(d / "train.jsonl"), "--model", str(d / "m.zip"), "--epochs", "3",
                 "--C", "1.0"]) == 0
    return d


def test_synth_is_reproducible(tmp_path, work):
    main(["synth", str(tmp_path / "again.jsonl"), "--n-docs", "10", "--max-props", "4", "--seed", "1"])
    assert (tmp_path / "again.jsonl").read_bytes() == (work / "train.jsonl").read_bytes()


def test_train_writes_model_and_trace(work):
    rows = read_csv(f"{work / 'm.zip'}.trace.csv")
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3]
    assert set(rows[0]) == {"epoch", "dual", "primal", "gap", "integral_ratio", "n_calls"}
    model = load_model(work / "m.zip")
    assert model.kind == "structured" and model.run_config["epochs"] == 3 and model.run_config["C"] == 1.0


def test_train_is_byte_identical(tmp_path, work):
    before = (work / "train.jsonl").read_bytes()
    main(["train", str(work / "train.jsonl"), "--model", str(tmp_path / "m.zip"), "--epochs", "3",
          "--C", "1.0"])
    assert (tmp_path / "m.zip").read_bytes() == (work / "m.zip").read_bytes()
    assert Path(f"{tmp_path / 'm.zip'}.trace.csv").read_bytes() == Path(f"{work / 'm.zip'}.trace.csv").read_bytes()
    assert (work / "train.jsonl").read_bytes() == before        # inputs untouched


@pytest.mark.parametrize("mode", ["round", "inference"])
def test_predict_and_evaluate(tmp_path, work, mode, capsys):
    out = tmp_path / "pred.jsonl"
    assert main(["predict", str(work / "test.jsonl"), str(out), "--model", str(work / "m.zip"),
                 "--mode", mode, "--dump-inference", str(tmp_path / "inf.csv")]) == 0
    rows = read_csv(tmp_path / "inf.csv")
    assert len(rows) == 6 and {r["status"] for r in rows} <= {"integral", "fractional", "max_iter", "round"}
    assert main(["evaluate", str(work / "test.jsonl"), str(out), "--json", str(tmp_path / "r.json"),
                 "--confusion", str(tmp_path / "c.csv")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert 0 <= rep["average"] <= 1
    assert (tmp_path / "c.normalized.csv").exists()


def test_strict_predictions_pass_checker(tmp_path, work, capsys):
    out = tmp_path / "pred.jsonl"
    assert main(["predict", str(work / "test.jsonl"), str(out), "--model", str(work / "m.zip"),
                 "--variant", "strict"]) == 0
    assert '"total": 0' in capsys.readouterr().out
    assert check_corpus(load_corpus(out), VariantConfig.structured("strict")).total == 0


def test_gold_as_predictions(tmp_path, work):
    assert main(["evaluate", str(work / "test.jsonl"), str(work / "test.jsonl"),
                 "--json", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["average"] == rep["link"]["f1"] == rep["prop_macro_f1"] == 1.0


def test_cv_grid_and_best_C(tmp_path, capsys):
    docs = tmp_path / "c.jsonl"
    main(["synth", str(docs), "--n-docs", "6", "--min-props", "2", "--max-props", "3"])
    grid = ["0.01", "0.03", "0.1", "0.3", "1", "3"]
    assert main(["cv", str(docs), "--table", str(tmp_path / "t.csv"), "--grid", *grid, "--k", "2",
                 "--epochs", "1", "--model", str(tmp_path / "best.zip")]) == 0
    rows = read_csv(tmp_path / "t.csv")
    assert len(rows) == 6 * 2
    means = {}
    for r in rows:
        means.setdefault(float(r["C"]), []).append(float(r["average"]))
    best = max(sorted(means), key=lambda c: np.mean(means[c]))      # ties go to the smaller C
    assert f"best C {best:g}" in capsys.readouterr().out
    assert load_model(tmp_path / "best.zip").run_config["C"] == best


def test_inspect_tables(tmp_path, work):
    tpl = fit_template(load_corpus(work / "train.jsonl"))
    save_model(Model("structured", tpl, ModelWeights.zeros(tpl), VariantConfig.structured("full")),
               tmp_path / "zero.zip")
    assert main(["inspect", "--model", str(tmp_path / "zero.zip"), "--out", str(tmp_path / "z")]) == 0
    files = sorted((tmp_path / "z").glob("*.csv"))
    assert len(files) == 4
    for f in files:
        body = [line.split(",")[1:] for line in f.read_text().splitlines()[1:]]
        assert {float(x) for row in body for x in row} == {0.0}
    save_model(Model("structured", tpl, ModelWeights.zeros(tpl), VariantConfig.structured("basic")),
               tmp_path / "basic.zip")
    main(["inspect", "--model", str(tmp_path / "basic.zip"), "--out", str(tmp_path / "b")])
    assert [f.name for f in (tmp_path / "b").glob("*.csv")] == ["compat_basic.csv"]


def test_log_odds_by_hand(work):
    model = load_model(work / "m.zip")
    tables = dict(compat_log_odds(model))
    w = model.weights.compat
    t = tables["adjacent=1,source_first=0"]
    i, j = 2, 3
    on = w[i, j, 1] @ [1.0, 1.0, 0.0]
    off = w[i, j, 0] @ [1.0, 1.0, 0.0]
    assert t[i, j] == pytest.approx(on - off, abs=1e-12)


def test_inspect_plot(tmp_path, work):
    pytest.importorskip("matplotlib")
    assert main(["inspect", "--model", str(work / "m.zip"), "--out", str(tmp_path), "--plot"]) == 0
    assert (tmp_path / "compat.png").stat().st_size > 0


def test_preprocess_closes_links(tmp_path):
    raw = make_doc(["a", "b", "c"], ["fact", "value", "policy"], {(0, 1), (1, 2)})
    save_corpus([raw], tmp_path / "raw.jsonl")
    assert main(["preprocess", str(tmp_path / "raw.jsonl"), str(tmp_path / "out.jsonl")]) == 0
    (doc,) = load_corpus(tmp_path / "out.jsonl")
    assert doc.gold_links == {(0, 1), (1, 2), (0, 2)}
    ukp = make_doc(["a", "b"], ["claim", "premise"], {(1, 0)}, "ukp")
    save_corpus([ukp], tmp_path / "u.jsonl")
    main(["preprocess", str(tmp_path / "u.jsonl"), str(tmp_path / "u2.jsonl")])
    assert load_corpus(tmp_path / "u2.jsonl") == [ukp]


def test_preprocess_drops_nested(tmp_path):
    props = (Proposition(0, 0, 10, "fact"), Proposition(1, 2, 6, "fact"), Proposition(2, 12, 15, "value"))
    doc = Document("n", "x" * 16, props, frozenset({(0, 2), (1, 2)}), Scheme.CDCP)
    save_corpus([doc], tmp_path / "n.jsonl")
    assert main(["preprocess", str(tmp_path / "n.jsonl"), str(tmp_path / "o.jsonl")]) == 0
    (out,) = load_corpus(tmp_path / "o.jsonl")
    assert len(out.props) == 2 and out.gold_links == {(0, 1)}


def test_stats_and_dump(work, capsys):
    assert main(["stats", str(work / "test.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)
    assert main(["dump", str(work / "test.jsonl"), "--model", str(work / "m.zip")]) == 0
    assert capsys.readouterr().out.count("# factor-graph dump v1") == 6


def test_exit_codes(tmp_path, work, monkeypatch, capsys):
    (tmp_path / "bad.jsonl").write_text("{not json\n")
    assert main(["stats", str(tmp_path / "bad.jsonl")]) == 2
    assert main(["stats", str(tmp_path / "missing.jsonl")]) == 2
    assert main(["train", str(work / "train.jsonl"), "--model", str(tmp_path / "x.zip"), "--C", "-1"]) == 2
    (tmp_path / "other.json").write_text(fit_template([make_doc(["zz qq", "zz qq"])], min_freq=1).to_json())
    assert main(["predict", str(work / "test.jsonl"), str(tmp_path / "p.jsonl"), "--model",
                 str(work / "m.zip"), "--template", str(tmp_path / "other.json")]) == 2

    def diverge(*a, **k):
        raise TrainingDiverged("non-finite dual objective in epoch 1", None)

    monkeypatch.setattr("argstruct.cli.fit_structured", diverge)
    assert main(["train", str(work / "train.jsonl"), "--model", str(tmp_path / "x.zip")]) == 3
    assert "non-finite" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    assert RunConfig.resolve({"C": 0.3, "epochs": 5}, {"C": 1.0, "epochs": None}).C == 1.0
    assert RunConfig.resolve({"C": 0.3, "epochs": 5}, {"C": None}).epochs == 5
    assert RunConfig.resolve({}, {}).C == 0.1
    with pytest.raises(ValueError):
        RunConfig.resolve({"colour": 1}, {})
    (tmp_path / "cfg.json").write_text(json.dumps({"epochs": 1, "variant": "nope"}))
    assert main(["stats", "--config", str(tmp_path / "cfg.json"), str(tmp_path / "x.jsonl")]) == 2
