"""Cross-validation, confusion matrices and classification metrics.

Metrics are computed from the confusion matrix with an explicit
zero-division policy (metric 0 plus a warning flag, never NaN) so fold
reports stay aggregable. Fold means are arithmetic means of per-fold
metrics, with the standard deviation reported alongside.
"""

from __future__ import annotations

import csv
import json
import random
import statistics
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .annotation import STANCE_CLASSES, cohen_kappa
from .classify import LabeledExample, Prediction
from .errors import BackendError, ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # rows = true, columns = predicted

    def __post_init__(self):
        k = len(self.classes)
        if len(self.counts) != k or any(len(row) != k for row in self.counts):
            raise ValidationError("confusion matrix is not square over the class list")
        if any(c < 0 for row in self.counts for c in row):
            raise ValidationError("negative count in confusion matrix")

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row_sums(self) -> list[int]:
        return [sum(row) for row in self.counts]

    def col_sums(self) -> list[int]:
        return [sum(row[j] for row in self.counts) for j in range(len(self.classes))]

    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.classes)))

    def row_percentages(self, digits: int = 2) -> list[list[float]]:
        """Per-row percentage view (presentation contract: rows sum to 100)."""
        out = []
        for row in self.counts:
            total = sum(row)
            if total == 0:
                out.append([0.0] * len(row))
            else:
                out.append([round(100.0 * c / total, digits) for c in row])
        return out


@dataclass
class EvalReport:
    per_class: dict[str, dict[str, float]]
    micro: dict[str, float]
    macro: dict[str, float]
    weighted: dict[str, float]
    zero_division_flags: list[str] = field(default_factory=list)
    fold: Optional[int] = None
    backend: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def confusion(true_labels: Sequence[str], predicted_labels: Sequence[str],
              classes: tuple[str, ...] = STANCE_CLASSES) -> ConfusionMatrix:
    if len(true_labels) != len(predicted_labels):
        raise ValidationError(
            f"length mismatch: {len(true_labels)} true vs {len(predicted_labels)} predicted"
        )
    index = {cls: i for i, cls in enumerate(classes)}
    counts = [[0] * len(classes) for _ in classes]
    for t, p in zip(true_labels, predicted_labels):
        if t not in index or p not in index:
            raise ValidationError(f"label outside {classes}: true={t!r} pred={p!r}")
        counts[index[t]][index[p]] += 1
    return ConfusionMatrix(classes=tuple(classes), counts=tuple(tuple(r) for r in counts))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics(matrix: ConfusionMatrix, fold: Optional[int] = None, backend: str = "") -> EvalReport:
    """Per-class precision/recall/F1 plus micro, macro and weighted averages."""
    if matrix.total == 0:
        raise ValidationError("cannot compute metrics on an all-zero matrix")
    flags = []
    per_class = {}
    row_sums = matrix.row_sums()
    col_sums = matrix.col_sums()
    for i, cls in enumerate(matrix.classes):
        tp = matrix.counts[i][i]
        if col_sums[i] == 0:
            precision = 0.0
            flags.append(f"precision[{cls}]: no predictions")
        else:
            precision = tp / col_sums[i]
        if row_sums[i] == 0:
            recall = 0.0
            flags.append(f"recall[{cls}]: no true instances")
        else:
            recall = tp / row_sums[i]
        per_class[cls] = {"precision": precision, "recall": recall, "f1": _f1(precision, recall)}
    accuracy = matrix.trace() / matrix.total
    micro = {"precision": accuracy, "recall": accuracy, "f1": accuracy, "accuracy": accuracy}
    k = len(matrix.classes)
    macro = {
        key: sum(per_class[c][key] for c in matrix.classes) / k
        for key in ("precision", "recall", "f1")
    }
    total = matrix.total
    weighted = {
        key: sum(per_class[c][key] * row_sums[i] for i, c in enumerate(matrix.classes)) / total
        for key in ("precision", "recall", "f1")
    }
    return EvalReport(
        per_class=per_class, micro=micro, macro=macro, weighted=weighted,
        zero_division_flags=flags, fold=fold, backend=backend,
    )


def kfold_split(
    records: Sequence[LabeledExample], k: int = 5, eval_fraction: float = 0.20, seed: int = 0
) -> list[tuple[list[LabeledExample], list[LabeledExample]]]:
    """Stratified k-fold; each fold evaluates a distinct 1/k slice and the
    eval slices union to the full set."""
    if k < 2:
        raise ValidationError("k must be >= 2")
    if abs(eval_fraction - 1.0 / k) > 1e-9:
        raise ValidationError(f"eval_fraction {eval_fraction} is inconsistent with k={k}")
    if len(records) < k:
        raise ValidationError(f"{len(records)} records cannot fill {k} folds")
    by_class: dict[str, list[LabeledExample]] = {}
    for rec in records:
        by_class.setdefault(rec.label, []).append(rec)
    rng = random.Random(seed)
    slices: list[list[list[LabeledExample]]] = []
    for cls in sorted(by_class):
        members = sorted(by_class[cls], key=lambda r: r.sentence_id)
        if len(members) < k:
            raise ValidationError(f"class {cls!r} has {len(members)} members, fewer than k={k}")
        rng.shuffle(members)
        base, extra = divmod(len(members), k)
        chunks, pos = [], 0
        for i in range(k):
            take = base + (1 if i < extra else 0)
            chunks.append(members[pos:pos + take])
            pos += take
        slices.append(chunks)
    folds = []
    for i in range(k):
        eval_set = [rec for chunks in slices for rec in chunks[i]]
        train_set = [rec for chunks in slices for j in range(k) if j != i for rec in chunks[j]]
        folds.append((train_set, eval_set))
    return folds


@dataclass
class CrossValidationResult:
    fold_reports: list[EvalReport]
    mean: EvalReport
    std: dict[str, float]
    fold_matrices: list[ConfusionMatrix]

    def to_dict(self) -> dict:
        return {
            "folds": [r.to_dict() for r in self.fold_reports],
            "mean": self.mean.to_dict(),
            "std": self.std,
        }


def _mean_reports(reports: list[EvalReport], backend: str) -> tuple[EvalReport, dict[str, float]]:
    def avg(values):
        return sum(values) / len(values)

    per_class = {
        cls: {
            key: avg([r.per_class[cls][key] for r in reports])
            for key in ("precision", "recall", "f1")
        }
        for cls in reports[0].per_class
    }
    micro = {key: avg([r.micro[key] for r in reports]) for key in reports[0].micro}
    macro = {key: avg([r.macro[key] for r in reports]) for key in reports[0].macro}
    weighted = {key: avg([r.weighted[key] for r in reports]) for key in reports[0].weighted}
    macro_f1s = [r.macro["f1"] for r in reports]
    std = {"macro_f1": statistics.pstdev(macro_f1s) if len(macro_f1s) > 1 else 0.0}
    mean = EvalReport(per_class=per_class, micro=micro, macro=macro, weighted=weighted,
                      backend=backend, fold=None)
    return mean, std


def cross_validate(
    backend_factory: Callable[[], object],
    records: Sequence[LabeledExample],
    k: int = 5,
    seed: int = 0,
) -> CrossValidationResult:
    """Train/evaluate a backend across stratified folds.

    The backend factory must yield objects with fit(examples) and
    predict(items) -> list[Prediction]; stateless backends may make fit a
    no-op."""
    folds = kfold_split(records, k=k, eval_fraction=1.0 / k, seed=seed)
    reports, matrices = [], []
    backend_name = ""
    for fold_id, (train_set, eval_set) in enumerate(folds):
        backend = backend_factory()
        backend_name = getattr(backend, "name", type(backend).__name__)
        try:
            backend.fit(train_set)
            predictions = backend.predict([(r.sentence_id, r.text) for r in eval_set])
        except Exception as exc:
            raise BackendError(f"backend failed on fold {fold_id}: {exc}") from exc
        if len(predictions) != len(eval_set):
            raise BackendError(
                f"fold {fold_id}: backend returned {len(predictions)} predictions "
                f"for {len(eval_set)} sentences"
            )
        matrix = confusion([r.label for r in eval_set], [p.label for p in predictions])
        matrices.append(matrix)
        reports.append(metrics(matrix, fold=fold_id, backend=backend_name))
    mean, std = _mean_reports(reports, backend_name)
    return CrossValidationResult(fold_reports=reports, mean=mean, std=std, fold_matrices=matrices)


@dataclass
class ComparisonResult:
    kappa: float
    cross_table: ConfusionMatrix
    n: int
    only_in_a: list[str]
    only_in_b: list[str]


def compare_predictions(
    preds_a: Iterable[Prediction], preds_b: Iterable[Prediction]
) -> ComparisonResult:
    """Join two prediction sets on sentence id and measure their agreement."""
    map_a = {p.sentence_id: p for p in preds_a}
    map_b = {p.sentence_id: p for p in preds_b}
    shared = sorted(set(map_a) & set(map_b))
    if not shared:
        raise ValidationError("prediction sets share no sentence ids")
    labels_a = [map_a[s].label for s in shared]
    labels_b = [map_b[s].label for s in shared]
    return ComparisonResult(
        kappa=cohen_kappa(labels_a, labels_b),
        cross_table=confusion(labels_a, labels_b),
        n=len(shared),
        only_in_a=sorted(set(map_a) - set(map_b)),
        only_in_b=sorted(set(map_b) - set(map_a)),
    )


def export_misclassified(
    records: Mapping[str, LabeledExample],
    predictions: Iterable[Prediction],
    fh,
    true_class: str = "Against",
    predicted_class: str = "Supportive",
    both_directions: bool = True,
) -> int:
    """Write misclassified sentences for a class pair, sorted by the
    predicted class's probability, descending."""
    wanted = {(true_class, predicted_class)}
    if both_directions:
        wanted.add((predicted_class, true_class))
    rows = []
    for pred in predictions:
        rec = records.get(pred.sentence_id)
        if rec is None:
            continue
        if (rec.label, pred.label) in wanted:
            rows.append((pred.probs[pred.label], rec, pred))
    rows.sort(key=lambda item: (-item[0], item[1].sentence_id))
    writer = csv.writer(fh)
    writer.writerow(["sentence_id", "text", "true", "predicted",
                     "p_against", "p_neutral", "p_supportive"])
    for _, rec, pred in rows:
        writer.writerow([
            rec.sentence_id, rec.text, rec.label, pred.label,
            repr(pred.probs["Against"]), repr(pred.probs["Neutral"]),
            repr(pred.probs["Supportive"]),
        ])
    return len(rows)


def report_to_csv(result: CrossValidationResult, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["fold", "class", "precision", "recall", "f1"])
    for report in result.fold_reports + [result.mean]:
        fold = "mean" if report.fold is None else str(report.fold)
        for cls in report.per_class:
            m = report.per_class[cls]
            writer.writerow([fold, cls, f"{m['precision']:.6f}", f"{m['recall']:.6f}", f"{m['f1']:.6f}"])
        writer.writerow([fold, "micro", f"{report.micro['precision']:.6f}",
                         f"{report.micro['recall']:.6f}", f"{report.micro['f1']:.6f}"])
        writer.writerow([fold, "macro", f"{report.macro['precision']:.6f}",
                         f"{report.macro['recall']:.6f}", f"{report.macro['f1']:.6f}"])
        writer.writerow([fold, "weighted", f"{report.weighted['precision']:.6f}",
                         f"{report.weighted['recall']:.6f}", f"{report.weighted['f1']:.6f}"])


def confusion_to_csv(matrix: ConfusionMatrix, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["true \\ predicted", *matrix.classes])
    for cls, row in zip(matrix.classes, matrix.counts):
        writer.writerow([cls, *row])


def report_to_json(result: CrossValidationResult, fh) -> None:
    json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
    fh.write("\n")
