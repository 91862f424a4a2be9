import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from atcnn.cli import main
from atcnn.constants import CLASSES
from atcnn.ensemble import read_decisions_csv

FAST = ["--epochs", "2", "--channels", "2", "--batch", "16", "--patience", "2"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "raw"), "--n", "60", "--samples", "64", "--seed", "3"]) == 0
    assert main(["preprocess", "--manifest", str(root / "raw" / "manifest.json"),
                 "--out", str(root / "pre")]) == 0
    manifest = str(root / "pre" / "manifest.json")
    models = str(root / "models")
    assert main(["train", "--manifest", manifest, "--class", "ALL", "--models-dir", models] + FAST) == 0
    return root, manifest, models


def test_synth_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--n", "5", "--samples", "50", "--seed", "1"]) == 0
    for f in (tmp_path / "a" / "signals").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / "signals" / f.name).read_bytes()


def test_train_all_writes_five_models(workspace):
    _, _, models = workspace
    from pathlib import Path
    names = sorted(p.name for p in Path(models).iterdir())
    assert names == sorted([f"{c}.atcn" for c in CLASSES] + [f"{c}.trainlog.jsonl" for c in CLASSES])


def test_train_is_deterministic(workspace, tmp_path):
    _, manifest, _ = workspace
    for d in ("m1", "m2"):
        assert main(["train", "--manifest", manifest, "--class", "MI", "--seed", "7",
                     "--models-dir", str(tmp_path / d)] + FAST) == 0
    assert (tmp_path / "m1" / "MI.atcn").read_bytes() == (tmp_path / "m2" / "MI.atcn").read_bytes()


def test_missing_manifest_exit_2(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert main(["train", "--manifest", str(missing), "--class", "MI"]) == 2
    assert str(missing) in capsys.readouterr().err


def test_usage_errors_exit_2():
    assert main(["train", "--manifest", "x", "--class", "AFIB"]) == 2
    assert main([]) == 2


def test_predict_and_threshold(workspace, tmp_path):
    _, manifest, models = workspace
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["predict", "--manifest", manifest, "--models-dir", models, "--out", str(out_a)]) == 0
    assert main(["predict", "--manifest", manifest, "--models-dir", models, "--out", str(out_b),
                 "--threshold", "0.9"]) == 0
    a, b = read_decisions_csv(out_a.read_text()), read_decisions_csv(out_b.read_text())
    assert len(a) == 12
    for da, db in zip(a, b):
        np.testing.assert_array_equal(da.probs, db.probs)
        assert np.all(db.labels <= da.labels)
    again = tmp_path / "c.csv"
    main(["predict", "--manifest", manifest, "--models-dir", models, "--out", str(again)])
    assert again.read_text() == out_a.read_text()


def test_predict_incomplete_ensemble_exit_3(workspace, tmp_path):
    _, manifest, models = workspace
    partial = tmp_path / "partial"
    partial.mkdir()
    from pathlib import Path
    for c in CLASSES[:-1]:
        (partial / f"{c}.atcn").write_bytes((Path(models) / f"{c}.atcn").read_bytes())
    assert main(["predict", "--manifest", manifest, "--models-dir", str(partial)]) == 3


def test_evaluate_report_and_roc(workspace, tmp_path, capsys):
    _, manifest, models = workspace
    preds = tmp_path / "p.csv"
    main(["predict", "--manifest", manifest, "--models-dir", models, "--out", str(preds)])
    capsys.readouterr()
    assert main(["evaluate", "--manifest", manifest, "--predictions", str(preds),
                 "--out", str(tmp_path / "ev")]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("Class\tTP\tFN\tFP\tTN")
    assert "Exact match" in text and "Risk groups" in text
    assert (tmp_path / "ev" / "report.txt").read_text() == text
    rocs = list((tmp_path / "ev").glob("roc_*.csv"))
    assert rocs and all(r.read_text().startswith("threshold,fpr,tpr") for r in rocs)


def test_evaluate_empty_partition_exit_4(workspace, tmp_path):
    root, _, models = workspace
    assert main(["synth", "--out", str(tmp_path / "s"), "--n", "3", "--samples", "64"]) == 0
    # three records with test_fraction 0.2 -> round(0.6) = 1 test record; ask for a partition with none
    assert main(["evaluate", "--manifest", str(tmp_path / "s" / "manifest.json"),
                 "--models-dir", models, "--partition", "holdout"]) == 4


def test_export_attention(workspace, tmp_path):
    _, manifest, models = workspace
    out = tmp_path / "att"
    assert main(["export-attention", "--manifest", manifest, "--models-dir", models,
                 "--class", "CD", "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "alpha.csv").read_text())))
    assert list(rows[0]) == ["record_id", "lead", "sample_index", "weight"]
    first = rows[0]["record_id"]
    per_lead = {}
    for r in rows:
        if r["record_id"] == first:
            per_lead.setdefault(r["lead"], []).append(float(r["weight"]))
    assert len(per_lead) == 12
    for w in per_lead.values():
        assert len(w) == 64 and abs(sum(w) - 1) <= 1e-6
    beta = [r for r in csv.DictReader(io.StringIO((out / "beta.csv").read_text())) if r["record_id"] == first]
    assert len(beta) == 12 and abs(sum(float(r["weight"]) for r in beta) - 1) <= 1e-6


def test_untrained_class_exit_5(workspace, tmp_path):
    _, manifest, _ = workspace
    assert main(["export-attention", "--manifest", manifest, "--models-dir", str(tmp_path),
                 "--class", "CD", "--out", str(tmp_path / "o")]) == 5
    assert main(["select-leads", "--manifest", manifest, "--models-dir", str(tmp_path),
                 "--class", "HYP"]) == 5


def test_select_leads_report(workspace, tmp_path, capsys):
    _, manifest, models = workspace
    out = tmp_path / "sweep.csv"
    assert main(["select-leads", "--manifest", manifest, "--models-dir", models, "--class", "MI",
                 "--out", str(out)] + FAST) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "class,k,leads,f1,optimal" and len(lines) == 13
    assert sum(int(l.split(",")[-1]) for l in lines[1:]) == 1
    assert "optimal k=" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "atcnn", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "export-attention" in res.stdout
