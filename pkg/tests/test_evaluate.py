import io
import random

import pytest

from stancemon.classify import LabeledExample, make_prediction, one_hot_prediction
from stancemon.errors import BackendError, ValidationError
from stancemon.evaluate import (
    ConfusionMatrix, compare_predictions, confusion, cross_validate,
    export_misclassified, kfold_split, metrics,
)

CLASSES = ("Against", "Neutral", "Supportive")


# Independent oracle: per-class tallies straight from the label lists.
def oracle_metrics(true, pred):
    per = {}
    for c in CLASSES:
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per[c] = {"precision": precision, "recall": recall, "f1": f1}
    accuracy = sum(1 for t, p in zip(true, pred) if t == p) / len(true)
    macro = {k: sum(per[c][k] for c in CLASSES) / len(CLASSES)
             for k in ("precision", "recall", "f1")}
    support = {c: sum(1 for t in true if t == c) for c in CLASSES}
    weighted = {k: sum(per[c][k] * support[c] for c in CLASSES) / len(true)
                for k in ("precision", "recall", "f1")}
    return per, accuracy, macro, weighted


def random_labels(rng, n):
    return [rng.choice(CLASSES) for _ in range(n)]


def examples_with_distribution(counts):
    out = []
    i = 0
    for label, n in counts.items():
        for _ in range(n):
            out.append(LabeledExample(f"{label[:1]}{i}", f"text {i}", label))
            i += 1
    return out


class EchoBackend:
    """Oracle backend: looks the true label up by sentence id."""
    name = "echo"

    def __init__(self, truth):
        self.truth = truth

    def fit(self, examples):
        pass

    def predict(self, items):
        return [one_hot_prediction(sid, self.truth[sid], "echo", "v1") for sid, _ in items]


class ConstantBackend:
    name = "const"

    def __init__(self, label):
        self.label = label

    def fit(self, examples):
        pass

    def predict(self, items):
        return [one_hot_prediction(sid, self.label, "const", "v1") for sid, _ in items]


class TestKFold:
    def test_five_disjoint_eval_slices(self):
        records = examples_with_distribution({"Against": 40, "Neutral": 40, "Supportive": 20})
        folds = kfold_split(records, k=5, eval_fraction=0.2, seed=1)
        eval_ids = [frozenset(r.sentence_id for r in ev) for _, ev in folds]
        assert all(len(ids) == 20 for ids in eval_ids)
        assert len(frozenset.union(*eval_ids)) == 100
        for i in range(5):
            for j in range(i + 1, 5):
                assert not (eval_ids[i] & eval_ids[j])

    def test_stratification(self):
        records = examples_with_distribution({"Against": 60, "Neutral": 30, "Supportive": 10})
        folds = kfold_split(records, k=5, eval_fraction=0.2, seed=3)
        for _, ev in folds:
            by_class = {c: sum(1 for r in ev if r.label == c) for c in CLASSES}
            assert by_class == {"Against": 12, "Neutral": 6, "Supportive": 2}

    def test_deterministic(self):
        records = examples_with_distribution({"Against": 10, "Neutral": 10, "Supportive": 10})
        a = kfold_split(records, k=5, eval_fraction=0.2, seed=9)
        b = kfold_split(records, k=5, eval_fraction=0.2, seed=9)
        assert [[r.sentence_id for r in ev] for _, ev in a] == \
            [[r.sentence_id for r in ev] for _, ev in b]

    def test_small_class_fails(self):
        records = examples_with_distribution({"Against": 10, "Neutral": 10, "Supportive": 3})
        with pytest.raises(ValidationError, match="Supportive"):
            kfold_split(records, k=5, eval_fraction=0.2, seed=0)

    def test_inconsistent_eval_fraction(self):
        records = examples_with_distribution({"Against": 10, "Neutral": 10, "Supportive": 10})
        with pytest.raises(ValidationError):
            kfold_split(records, k=5, eval_fraction=0.3, seed=0)

    def test_train_eval_partition(self):
        records = examples_with_distribution({"Against": 11, "Neutral": 7, "Supportive": 5})
        for train, ev in kfold_split(records, k=5, eval_fraction=0.2, seed=2):
            ids = {r.sentence_id for r in train} | {r.sentence_id for r in ev}
            assert len(ids) == 23
            assert not ({r.sentence_id for r in train} & {r.sentence_id for r in ev})


class TestConfusion:
    def test_perfect_is_diagonal(self):
        labels = ["Against", "Neutral", "Supportive", "Against"]
        m = confusion(labels, labels)
        assert m.trace() == 4 and m.total == 4

    def test_hand_count(self):
        m = confusion(["Against", "Against", "Neutral"], ["Against", "Neutral", "Neutral"])
        assert m.counts[0] == (1, 1, 0)
        assert m.counts[1] == (0, 1, 0)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            confusion(["Against"], ["Against", "Neutral"])

    def test_ambiguous_rejected(self):
        with pytest.raises(ValidationError):
            confusion(["Ambiguous"], ["Against"])

    def test_row_percentages_from_reference_ratios(self):
        # counts chosen so the Against row normalizes to 69.92 / 22.88 / 7.20
        m = ConfusionMatrix(CLASSES, ((1748, 572, 180), (100, 100, 100), (1, 1, 2)))
        rows = m.row_percentages()
        assert rows[0] == [69.92, 22.88, 7.20]
        for row in rows:
            assert abs(sum(row) - 100.0) <= 0.01 + 1e-9


class TestMetrics:
    def test_diagonal_all_ones(self):
        m = ConfusionMatrix(CLASSES, ((5, 0, 0), (0, 7, 0), (0, 0, 2)))
        report = metrics(m)
        for cls in CLASSES:
            assert report.per_class[cls] == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
        assert report.macro["f1"] == 1.0

    def test_hand_matrix(self):
        m = ConfusionMatrix(CLASSES, ((8, 2, 0), (1, 7, 2), (0, 3, 7)))
        report = metrics(m)
        assert report.per_class["Against"]["precision"] == pytest.approx(8 / 9, abs=1e-12)
        assert report.per_class["Against"]["recall"] == pytest.approx(0.8, abs=1e-12)
        assert report.per_class["Against"]["f1"] == pytest.approx(16 / 19, abs=1e-12)

    def test_never_predicted_class_flagged_zero(self):
        m = ConfusionMatrix(CLASSES, ((5, 0, 0), (3, 0, 0), (2, 0, 0)))
        report = metrics(m)
        assert report.per_class["Neutral"]["precision"] == 0.0
        assert any("Neutral" in flag for flag in report.zero_division_flags)

    def test_all_zero_matrix(self):
        with pytest.raises(ValidationError):
            metrics(ConfusionMatrix(CLASSES, ((0, 0, 0), (0, 0, 0), (0, 0, 0))))

    def test_micro_identity_exact(self):
        rng = random.Random(11)
        for _ in range(50):
            true = random_labels(rng, rng.randint(3, 60))
            pred = random_labels(rng, len(true))
            report = metrics(confusion(true, pred))
            accuracy = sum(1 for t, p in zip(true, pred) if t == p) / len(true)
            assert abs(report.micro["precision"] - report.micro["recall"]) <= 1e-12
            assert abs(report.micro["precision"] - accuracy) <= 1e-12

    def test_agrees_with_label_list_oracle(self):
        rng = random.Random(29)
        for _ in range(200):
            true = random_labels(rng, rng.randint(3, 50))
            pred = random_labels(rng, len(true))
            report = metrics(confusion(true, pred))
            per, accuracy, macro, weighted = oracle_metrics(true, pred)
            for c in CLASSES:
                for key in ("precision", "recall", "f1"):
                    assert abs(report.per_class[c][key] - per[c][key]) <= 1e-12
            assert abs(report.micro["accuracy"] - accuracy) <= 1e-12
            for key in ("precision", "recall", "f1"):
                assert abs(report.macro[key] - macro[key]) <= 1e-12
                assert abs(report.weighted[key] - weighted[key]) <= 1e-12

    def test_macro_f1_invariant_under_class_permutation(self):
        rng = random.Random(5)
        true = random_labels(rng, 40)
        pred = random_labels(rng, 40)
        base = metrics(confusion(true, pred, CLASSES)).macro["f1"]
        permuted_classes = ("Supportive", "Against", "Neutral")
        permuted = metrics(confusion(true, pred, permuted_classes)).macro["f1"]
        assert base == pytest.approx(permuted, abs=1e-12)


class TestCrossValidate:
    def test_oracle_backend_scores_one(self):
        records = examples_with_distribution({"Against": 10, "Neutral": 10, "Supportive": 10})
        truth = {r.sentence_id: r.label for r in records}
        result = cross_validate(lambda: EchoBackend(truth), records, k=5, seed=0)
        assert result.mean.macro["f1"] == 1.0

    def test_constant_backend_hand_value(self):
        records = examples_with_distribution({"Against": 10, "Neutral": 10, "Supportive": 10})
        result = cross_validate(lambda: ConstantBackend("Against"), records, k=5, seed=0)
        # per fold: f1(Against) = 2*(1/3)/(4/3) = 0.5, other classes 0
        assert result.mean.macro["f1"] == pytest.approx(0.5 / 3, abs=1e-12)

    def test_mean_is_arithmetic_mean_of_folds(self):
        records = examples_with_distribution({"Against": 13, "Neutral": 9, "Supportive": 7})
        truth = {r.sentence_id: r.label for r in records}
        result = cross_validate(lambda: EchoBackend(truth), records, k=5, seed=1)
        expected = sum(r.macro["f1"] for r in result.fold_reports) / len(result.fold_reports)
        assert result.mean.macro["f1"] == pytest.approx(expected, abs=1e-15)

    def test_backend_error_annotated_with_fold(self):
        class Broken:
            def fit(self, ex):
                raise RuntimeError("nope")

            def predict(self, items):
                return []

        records = examples_with_distribution({"Against": 5, "Neutral": 5, "Supportive": 5})
        with pytest.raises(BackendError, match="fold 0"):
            cross_validate(lambda: Broken(), records, k=5, seed=0)


class TestCompare:
    def test_identical_sets(self):
        preds = [one_hot_prediction(f"s{i}", "Against", "a", "v") for i in range(4)]
        result = compare_predictions(preds, preds)
        assert result.kappa == 1.0 and result.n == 4

    def test_permuted_labels_nonpositive_kappa(self):
        cycle = {"Against": "Neutral", "Neutral": "Supportive", "Supportive": "Against"}
        labels = ["Against", "Neutral", "Supportive"] * 4
        a = [one_hot_prediction(f"s{i}", l, "a", "v") for i, l in enumerate(labels)]
        b = [one_hot_prediction(f"s{i}", cycle[l], "b", "v") for i, l in enumerate(labels)]
        result = compare_predictions(a, b)
        assert result.kappa <= 0.0

    def test_id_mismatch_reported(self):
        a = [one_hot_prediction("s1", "Against", "a", "v"),
             one_hot_prediction("s2", "Neutral", "a", "v")]
        b = [one_hot_prediction("s2", "Neutral", "b", "v"),
             one_hot_prediction("s3", "Against", "b", "v")]
        result = compare_predictions(a, b)
        assert result.only_in_a == ["s1"] and result.only_in_b == ["s3"]
        assert result.n == 1


class TestExportMisclassified:
    def records(self):
        return {
            "s1": LabeledExample("s1", "esimene", "Against"),
            "s2": LabeledExample("s2", "teine", "Against"),
            "s3": LabeledExample("s3", "kolmas", "Neutral"),
        }

    def test_perfect_predictions_empty(self):
        preds = [make_prediction("s1", [0.9, 0.05, 0.05], "nb", "v"),
                 make_prediction("s2", [0.8, 0.1, 0.1], "nb", "v")]
        buf = io.StringIO()
        assert export_misclassified(self.records(), preds, buf) == 0

    def test_one_mistake_one_row(self):
        preds = [make_prediction("s1", [0.1, 0.2, 0.7], "nb", "v")]
        buf = io.StringIO()
        assert export_misclassified(self.records(), preds, buf) == 1
        assert "esimene" in buf.getvalue()

    def test_sorted_by_predicted_probability(self):
        preds = [
            make_prediction("s1", [0.05, 0.08, 0.87], "nb", "v"),
            make_prediction("s2", [0.34, 0.08, 0.58], "nb", "v"),
        ]
        buf = io.StringIO()
        export_misclassified(self.records(), preds, buf)
        lines = buf.getvalue().splitlines()
        assert lines[1].startswith("s1,") and lines[2].startswith("s2,")

    def test_filter_excludes_neutral_confusions(self):
        preds = [make_prediction("s3", [0.9, 0.05, 0.05], "nb", "v")]
        buf = io.StringIO()
        assert export_misclassified(self.records(), preds, buf) == 0
