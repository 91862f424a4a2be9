import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atcnn.constants import CLASSES
from atcnn.ensemble import (
    DECISION_HEADER, MultiLabelEnsemble, decide, decisions_csv, predict_batch, predict_multilabel,
    read_decisions_csv, risk_group, risk_stratify, threshold_probs,
)
from atcnn.errors import ConfigError, EnsembleIncompleteError
from atcnn.model import ArchConfig, forward, init_parameters


def _ensemble(T=16, seed=0, skip=()):
    cfg = ArchConfig(input_length=T, channels=2)
    return MultiLabelEnsemble({c: init_parameters(cfg, c, seed=seed + i)
                               for i, c in enumerate(CLASSES) if c not in skip})


def test_threshold_examples():
    d = decide([0.9, 0.1, 0.2, 0.1, 0.3])
    assert d.labels.tolist() == [1, 0, 0, 0, 0] and d.risk == "normal"
    d = decide([0.1, 0.8, 0.2, 0.9, 0.7])
    assert d.labels.tolist() == [0, 1, 0, 1, 1] and d.risk == "multimorbidity"
    assert threshold_probs([0.5, 0.4999999]).tolist() == [1, 0]


@pytest.mark.parametrize("labels,group", [
    ([1, 0, 0, 0, 0], "normal"), ([0, 0, 0, 0, 0], "normal"), ([1, 1, 0, 0, 0], "single-disorder"),
    ([0, 0, 0, 0, 1], "single-disorder"), ([0, 1, 0, 0, 1], "multimorbidity"),
    ([1, 1, 1, 1, 1], "multimorbidity"),
])
def test_risk_group_ignores_nsr(labels, group):
    assert risk_group(labels) == group


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=5), st.floats(0.01, 0.98), st.floats(0, 0.5))
def test_raising_threshold_never_adds_labels(p, tau, delta):
    lo = threshold_probs(p, tau)
    hi = threshold_probs(p, min(tau + delta, 0.99))
    assert np.all(hi <= lo)


def test_ensemble_matches_members(rng):
    ens = _ensemble()
    x = rng.normal(size=(12, 16))
    d = predict_multilabel(ens, x, "r1")
    probs = [forward(ens.models[c], x).p for c in CLASSES]
    np.testing.assert_allclose(d.probs, probs, atol=1e-7)
    assert d.labels.tolist() == [int(p >= 0.5) for p in d.probs]
    assert d.record_id == "r1"


def test_batch_equals_single(rng):
    ens = _ensemble(seed=3)
    X = rng.normal(size=(4, 12, 16))
    batch = predict_batch(ens, X, ["a", "b", "c", "d"])
    for i in range(4):
        np.testing.assert_allclose(batch[i].probs, predict_multilabel(ens, X[i]).probs, atol=1e-7)


def test_incomplete_ensemble(rng):
    ens = _ensemble(skip=("HYP",))
    with pytest.raises(EnsembleIncompleteError, match="HYP"):
        predict_multilabel(ens, rng.normal(size=(12, 16)))


def test_ensemble_validation():
    with pytest.raises(ConfigError):
        MultiLabelEnsemble(_ensemble().models, threshold=1.0)
    models = _ensemble().models
    models["CD"] = init_parameters(ArchConfig(input_length=20, channels=2), "CD")
    with pytest.raises(ConfigError):
        MultiLabelEnsemble(models)
    models = _ensemble().models
    models["CD"] = models["MI"]
    with pytest.raises(ConfigError):
        MultiLabelEnsemble(models)


def test_stratify_counts():
    ds = [decide(p) for p in ([.9, 0, 0, 0, 0], [0, .9, 0, 0, 0], [0, .9, .9, 0, 0])]
    assert risk_stratify(ds)["counts"] == {"normal": 1, "single-disorder": 1, "multimorbidity": 1}
    assert risk_stratify(ds[:1] * 4)["counts"] == {"normal": 4, "single-disorder": 0, "multimorbidity": 0}


def test_stratify_group_matches():
    ds = [decide(p) for p in ([.9, 0, 0, 0, 0], [0, .9, 0, 0, 0], [0, .9, .9, 0, 0], [0, 0, 0, .9, 0])]
    truth = np.array([
        [1, 0, 0, 0, 0],   # normal -> normal (match)
        [0, 1, 1, 0, 0],   # multi -> single (miss)
        [0, 0, 1, 1, 0],   # multi -> multi (match, labels differ)
        [0, 1, 0, 1, 1],   # multi -> single (miss)
    ])
    out = risk_stratify(ds, truth)
    assert sum(out["group_matches"].values()) == 2
    assert out["group_matches"] == {"normal": 1, "single-disorder": 0, "multimorbidity": 1}
    assert out["exact_matches"] == {"normal": 1, "single-disorder": 0, "multimorbidity": 0}
    assert out["true_counts"] == {"normal": 1, "single-disorder": 0, "multimorbidity": 3}


def test_decision_csv_round_trip():
    ds = [decide([0.123456789, 0.5, 0.2, 0.9, 0.0], record_id="x1"),
          decide([0.7, 0.1, 0.6, 0.0, 0.55], record_id="x2")]
    text = decisions_csv(ds)
    lines = text.splitlines()
    assert lines[0].split(",") == DECISION_HEADER
    assert lines[1] == "x1,0.123457,0.500000,0.200000,0.900000,0.000000,0,1,0,1,0,multimorbidity"
    back = read_decisions_csv(text)
    assert [d.record_id for d in back] == ["x1", "x2"]
    assert back[1].labels.tolist() == [1, 0, 1, 0, 1] and back[1].risk == "multimorbidity"
