import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zslopt import evaluation as ev
from zslopt.dataset import Dataset, synth
from zslopt.errors import DatasetError


def confusion_oracle(pred, truth, classes):
    """Per-class accuracy from an explicit confusion matrix."""
    index = {c: i for i, c in enumerate(classes)}
    others = len(classes)
    conf = [[0] * (others + 1) for _ in classes]
    for p, t in zip(pred, truth):
        conf[index[t]][index.get(p, others)] += 1
    return sum(conf[i][i] / sum(conf[i]) for i in range(others)) / others


def random_case(rng):
    n_classes = int(rng.integers(1, 6))
    classes = sorted(rng.choice(20, n_classes, replace=False).tolist())
    truth = [int(c) for c in classes] + [int(c) for c in rng.choice(classes, int(rng.integers(0, 20)))]
    pred = [int(rng.choice(classes + [99])) for _ in truth]
    order = rng.permutation(len(truth))
    return [pred[i] for i in order], [truth[i] for i in order], classes


def test_per_class_matches_confusion_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pred, truth, classes = random_case(rng)
        assert ev.per_class_accuracy(pred, truth, classes) == confusion_oracle(pred, truth, classes)


def test_per_class_examples():
    assert ev.per_class_accuracy([1, 2, 3], [1, 2, 3], [1, 2, 3]) == 1.0
    pred = [0, 0, 1, 1, 1, 1, 1]
    truth = [0, 0, 0, 0, 1, 1, 1]
    assert ev.per_class_accuracy(pred, truth, [0, 1]) == 0.75


def test_per_class_errors():
    with pytest.raises(DatasetError, match="class 2"):
        ev.per_class_accuracy([0], [0], [0, 2])
    with pytest.raises(DatasetError):
        ev.per_class_accuracy([0], [5], [0])
    with pytest.raises(ValueError):
        ev.per_class_accuracy([0, 1], [0], [0])


@given(st.integers(0, 2**32), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_per_class_invariants(seed, reps):
    rng = np.random.default_rng(seed)
    pred, truth, classes = random_case(rng)
    base = ev.per_class_accuracy(pred, truth, classes)
    perm = rng.permutation(len(pred))
    assert ev.per_class_accuracy([pred[i] for i in perm], [truth[i] for i in perm], classes) == base
    # duplicating every instance the same number of times keeps class balance
    assert ev.per_class_accuracy(pred * reps, truth * reps, classes) == pytest.approx(base, abs=1e-15)


def test_per_class_equals_micro_when_balanced():
    rng = np.random.default_rng(3)
    truth = np.repeat([4, 7, 9], 10)
    pred = np.where(rng.random(30) < 0.6, truth, 0)
    assert ev.per_class_accuracy(pred, truth, [4, 7, 9]) == pytest.approx(np.mean(pred == truth))


def test_harmonic_reference_values():
    assert abs(ev.harmonic(0.432, 0.778) - 0.556) <= 0.0005
    assert abs(ev.harmonic(0.284, 0.607) - 0.387) <= 0.0005
    # exact rational evaluation of the formula, rounded to float
    assert ev.harmonic(0.432, 0.778) == pytest.approx(0.5555305785123967, rel=1e-12)
    assert ev.harmonic(0.284, 0.607) == pytest.approx(0.38695398428731764, rel=1e-12)


def test_harmonic_edge_cases():
    assert ev.harmonic(0.0, 0.0) == 0.0
    assert ev.harmonic(0.0, 0.9) == 0.0
    assert ev.harmonic(0.4, 0.4) == pytest.approx(0.4)


@given(st.floats(0, 1), st.floats(0, 1))
def test_harmonic_properties(a, b):
    h = ev.harmonic(a, b)
    assert h == ev.harmonic(b, a)
    assert h <= 2 * min(a, b) + 1e-15
    assert h >= min(a, b) - 1e-15


def toy_dataset():
    """Three unseen classes, two seen, hand-sized."""
    feats = np.arange(14, dtype=float)[:, None]
    labels = [0, 0, 1, 1, 0, 1, 2, 2, 3, 3, 3, 4, 4, 4]
    return Dataset("toy", feats, labels, np.eye(5), [0, 1], [2, 3, 4], [0, 1, 2, 3], list(range(6, 14)), [4, 5])


def table_recognizer(table):
    def rec(x, cands):
        cands = set(int(c) for c in cands)
        out = []
        for v in x[:, 0]:
            want = table[int(v)]
            out.append(want if want in cands else min(cands))
        return np.array(out)
    return rec


def test_eval_zsl_toy():
    ds = toy_dataset()
    table = {6: 2, 7: 3, 8: 3, 9: 3, 10: 2, 11: 4, 12: 4, 13: 4}
    rep = ev.eval_zsl(table_recognizer(table), ds)
    # class 2: 1/2, class 3: 2/3, class 4: 3/3
    assert rep.per_class_acc == {2: 0.5, 3: 2 / 3, 4: 1.0}
    assert rep.top1_zsl == pytest.approx((0.5 + 2 / 3 + 1.0) / 3)
    assert rep.acc_ts is None and rep.harmonic is None


def test_eval_zsl_perfect_and_constant(tiny):
    truth = dict(zip(tiny.features[:, 0].tolist(), tiny.labels.tolist()))

    def perfect(x, cands):
        return np.array([truth[v] for v in x[:, 0].tolist()])

    assert ev.eval_zsl(perfect, tiny).top1_zsl == 1.0
    const = lambda x, cands: np.full(x.shape[0], min(cands))  # noqa: E731
    assert ev.eval_zsl(const, tiny).top1_zsl == pytest.approx(1 / tiny.unseen_classes.size)


def test_eval_gzsl_toy_against_exhaustive():
    ds = toy_dataset()
    table = {4: 0, 5: 2, 6: 2, 7: 0, 8: 3, 9: 3, 10: 1, 11: 4, 12: 4, 13: 4}
    seen_candidates = []

    def rec(x, cands):
        seen_candidates.append(sorted(int(c) for c in cands))
        return table_recognizer(table)(x, cands)

    rep = ev.eval_gzsl(rec, ds)
    assert all(c == [0, 1, 2, 3, 4] for c in seen_candidates)
    ts = (1 / 2 + 2 / 3 + 1.0) / 3
    tr = (1.0 + 0.0) / 2
    assert rep.acc_ts == pytest.approx(ts)
    assert rep.acc_tr == pytest.approx(tr)
    assert rep.harmonic == pytest.approx(2 * ts * tr / (ts + tr))
    assert rep.per_class_acc[1] == 0.0


def test_gzsl_seen_only_recognizer_scores_zero(tiny):
    rep = ev.eval_gzsl(lambda x, c: np.zeros(x.shape[0], dtype=int), tiny)
    assert rep.acc_ts == 0.0 and rep.harmonic == 0.0


def test_gzsl_needs_seen_split():
    ds = synth(seed=0, p=3, q=1, d=4, k=3, n_per_class=5, test_seen_frac=0.0)
    with pytest.raises(DatasetError, match="seen test split"):
        ev.eval_gzsl(lambda x, c: np.zeros(x.shape[0], dtype=int), ds)


def sample_report():
    return ev.EvalReport("gzsl", {0: 0.25, 3: 1.0, 1: 0.5}, acc_ts=0.1, acc_tr=0.3, harmonic=0.15,
                         config_digest="ab" * 32, seed=7)


def test_report_json_round_trip(tmp_path):
    rep = sample_report()
    ev.emit_report(rep, tmp_path)
    back = ev.read_report(tmp_path / "report_gzsl.json")
    assert back == rep
    obj = json.loads((tmp_path / "report_gzsl.json").read_text())
    assert set(obj) >= {"per_class", "top1_zsl", "ts", "tr", "H", "seed", "config_digest"}
    assert obj["per_class"][0] == {"class": 0, "acc": 0.25}
    assert obj["top1_zsl"] is None


def test_report_csv_rows(tmp_path):
    ev.emit_report(sample_report(), tmp_path, ["csv"])
    lines = (tmp_path / "report_gzsl.csv").read_text().splitlines()
    assert len(lines) == 3 + 1
    assert lines[0] == "class,acc,acc_percent"
    assert lines[2] == "1,0.5,50.0"
    assert not (tmp_path / "report_gzsl.json").exists()


def test_report_bytes_deterministic(tmp_path):
    ev.emit_report(sample_report(), tmp_path / "a")
    ev.emit_report(sample_report(), tmp_path / "b")
    for name in ("report_gzsl.json", "report_gzsl.csv", "report_gzsl.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    svg = (tmp_path / "a" / "report_gzsl.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<rect") == 3


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        ev.emit_report(sample_report(), tmp_path, ["pdf"])
