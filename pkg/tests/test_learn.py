import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from serattn.corpus import ManifestRow
from serattn.errors import CappedLossWarning, LabelError, NonFiniteGradient, StratifyWarning
from serattn.learn import (
    AdamState,
    TrainConfig,
    adam_step,
    confusion_matrix,
    cross_entropy,
    encode_labels,
    evaluate_predictions,
    softmax,
    softmax_cross_entropy,
    split_dataset,
    train,
)
from serattn.nn import AttentionCNN, ModelConfig, Tensor

from oracles import numeric_grad, rel_err


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-500, 500), min_size=2, max_size=10))
def test_softmax_is_a_distribution(h):
    p = softmax(np.array(h))
    assert np.isfinite(p).all() and (p >= 0).all()
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_shift_invariant_and_large_logits():
    h = np.array([1000.0, 1001.0, 999.0])
    np.testing.assert_allclose(softmax(h), softmax(h - 1000.0))


def test_cross_entropy_definition_and_cap():
    p = np.array([0.2, 0.5, 0.3])
    assert cross_entropy(p, np.array([0, 1, 0])) == pytest.approx(-np.log(0.5))
    with pytest.warns(CappedLossWarning):
        v = cross_entropy(np.array([1.0, 0.0]), np.array([0, 1]))
    assert v == pytest.approx(-np.log(1e-12))


def test_softmax_cross_entropy_gradient():
    logits = np.random.default_rng(0).standard_normal((4, 5)) * 3
    y = np.array([0, 4, 2, 2])
    _, g = softmax_cross_entropy(logits, y)
    num = numeric_grad(lambda: softmax_cross_entropy(logits, y)[0], logits)
    assert rel_err(g, num) < 1e-4


def test_softmax_cross_entropy_extreme_logits_finite():
    loss, g = softmax_cross_entropy(np.array([[1e4, -1e4]]), np.array([1]))
    assert loss == pytest.approx(2e4) and np.isfinite(g).all()


def test_adam_first_step_moves_by_lr():
    p = {"w": Tensor(np.array([1.0, -2.0, 0.0]))}
    adam_step(p, {"w": np.array([0.5, -3.0, 1e-3])}, AdamState(), lr=0.1)
    np.testing.assert_allclose(p["w"].data, [0.9, -1.9, -0.1], atol=1e-5)


def test_adam_matches_reference_over_steps():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(4)
    p = {"w": Tensor(w.copy())}
    st_ = AdamState()
    m = v = np.zeros(4)
    for t in range(1, 6):
        g = rng.standard_normal(4)
        adam_step(p, {"w": g}, st_, lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"].data, w, rtol=1e-12)


def test_adam_aborts_on_non_finite():
    p = {"a": Tensor(np.ones(2)), "b": Tensor(np.ones(2))}
    st_ = AdamState()
    with pytest.raises(NonFiniteGradient) as exc:
        adam_step(p, {"a": np.ones(2), "b": np.array([np.nan, 0.0])}, st_, lr=0.1)
    assert exc.value.name == "b"
    np.testing.assert_array_equal(p["a"].data, 1.0)
    assert st_.step == 0


def _rows(counts):
    rows = []
    for label, n in counts.items():
        rows += [ManifestRow(f"{label}{i}.wav", label, "TESS") for i in range(n)]
    return rows


def test_stratified_split():
    rows = _rows({"a": 10, "b": 5, "c": 3})
    train_rows, test_rows = split_dataset(rows, TrainConfig(seed=1))
    count = lambda rs, l: sum(r.label == l for r in rs)  # noqa: E731
    assert [count(train_rows, l) for l in "abc"] == [8, 4, 2]  # 2.4 rounds to 2
    assert len(train_rows) + len(test_rows) == 18
    assert {r.path for r in train_rows}.isdisjoint(r.path for r in test_rows)
    assert all(r.split == "train" for r in train_rows) and all(r.split == "test" for r in test_rows)


def test_split_rounds_half_up():
    train_rows, _ = split_dataset(_rows({"a": 5, "b": 5}), TrainConfig(split_ratio=0.5))
    assert len(train_rows) == 6


def test_split_is_seeded():
    rows = _rows({"a": 20, "b": 20})
    assert split_dataset(rows, TrainConfig(seed=4)) == split_dataset(rows, TrainConfig(seed=4))
    assert split_dataset(rows, TrainConfig(seed=4)) != split_dataset(rows, TrainConfig(seed=5))


def test_split_singleton_class_warns():
    with pytest.warns(StratifyWarning):
        train_rows, test_rows = split_dataset(_rows({"a": 9, "b": 1}))
    assert len(train_rows) == 8


def test_confusion_and_report(tmp_path):
    rep = evaluate_predictions([0, 0, 1, 1, 2], [0, 1, 1, 1, 0], ["x", "y", "z"])
    np.testing.assert_array_equal(rep.confusion, [[1, 1, 0], [0, 2, 0], [1, 0, 0]])
    assert rep.accuracy == pytest.approx(0.6)
    np.testing.assert_allclose(rep.recall, [0.5, 1.0, 0.0])
    np.testing.assert_allclose(rep.precision, [0.5, 2 / 3, 0.0])
    rep.write(tmp_path / "r.json", tmp_path / "r.csv")
    assert json.loads((tmp_path / "r.json").read_text())["accuracy"] == pytest.approx(0.6)
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "x,1,1,0"


def test_confusion_sums_to_n():
    rng = np.random.default_rng(0)
    t, p = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
    cm = confusion_matrix(t, p, 4)
    assert cm.sum() == 50 and np.trace(cm) == (t == p).sum()


def test_label_errors():
    with pytest.raises(LabelError):
        encode_labels(["a", "q"], ["a", "b"])
    with pytest.raises(LabelError):
        evaluate_predictions([0, 3], [0, 1], ["a", "b"])


def _separable(n=24, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, 1, 8)) * 0.3
    X[:, 0, :4] += np.where(y == 1, 1.5, -1.5)[:, None]
    return X, y


def test_train_logs_and_restores_best():
    X, y = _separable()
    model = AttentionCNN(ModelConfig(n_classes=2, length=8, channels=8, reduction=2))
    seen = []
    res = train(model, X, y, TrainConfig(learning_rate=1e-2, batch_size=8, max_epochs=6),
                X[:8], y[:8], on_epoch=seen.append)
    assert [e.epoch for e in seen] == list(range(1, 7))
    assert res.best_val_acc == max(e.val_acc for e in seen)
    for k, v in model.state_dict().items():
        np.testing.assert_array_equal(v, res.best_state[k])
    json.loads(seen[0].to_json())


def test_train_rejects_bad_labels():
    X, y = _separable()
    model = AttentionCNN(ModelConfig(n_classes=2, length=8, channels=8, reduction=2))
    with pytest.raises(LabelError):
        train(model, X, y + 5, TrainConfig(max_epochs=1))


def test_train_reports_non_finite_context():
    X, y = _separable()
    X[3, 0, 0] = np.nan
    model = AttentionCNN(ModelConfig(n_classes=2, length=8, channels=8, reduction=2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(NonFiniteGradient, match="epoch 1"):
            train(model, X, y, TrainConfig(max_epochs=1, batch_size=64))
