"""Classification metrics, stratified k-fold cross-validation and grid search."""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .dataset import N_CLASSES, CategoryLabel
from .exceptions import ClassTooSmall, EmptyInput, LengthMismatch
from .models import make_model
from .rng import SplitMix64

DEFAULT_GRIDS = {
    "forest": {"n_trees": [100, 200, 500]},
    "mlp": {"hidden_neurons": [50, 100]},
    "knn": {"k": [3, 5, 7]},
}


def _div(a, b):
    return a / b if b else 0.0


@dataclass
class EvalReport:
    accuracy: float
    precision: list
    recall: list
    f1: list
    support: list
    confusion: list
    n_samples: int
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def to_dict(self):
        names = [c.name for c in CategoryLabel]
        return {
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
            "per_class": {
                name: {"precision": self.precision[c], "recall": self.recall[c],
                       "f1": self.f1[c], "support": self.support[c]}
                for c, name in enumerate(names)
            },
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1},
            "weighted": {"precision": self.weighted_precision, "recall": self.weighted_recall,
                         "f1": self.weighted_f1},
            "confusion": {"labels": names, "matrix": self.confusion},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def format_table(self):
        names = [c.name for c in CategoryLabel]
        width = max(len(n) for n in names)
        lines = [f"accuracy: {self.accuracy:.4f}  (n={self.n_samples})", ""]
        lines.append(f"{'class':<{width}}  precision  recall     f1  support")
        for c, name in enumerate(names):
            lines.append(f"{name:<{width}}  {self.precision[c]:9.4f}  {self.recall[c]:6.4f}  "
                         f"{self.f1[c]:5.4f}  {self.support[c]:7d}")
        lines.append(f"{'macro':<{width}}  {self.macro_precision:9.4f}  {self.macro_recall:6.4f}  "
                     f"{self.macro_f1:5.4f}")
        lines.append(f"{'weighted':<{width}}  {self.weighted_precision:9.4f}  "
                     f"{self.weighted_recall:6.4f}  {self.weighted_f1:5.4f}")
        lines.append("")
        lines.append("confusion (rows = true, cols = predicted)")
        short = [n[:8] for n in names]
        lines.append(" " * width + "  " + " ".join(f"{s:>8}" for s in short))
        for c, name in enumerate(names):
            lines.append(f"{name:<{width}}  " + " ".join(f"{v:8d}" for v in self.confusion[c]))
        return "\n".join(lines)


def confusion_matrix(predictions, truths):
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (np.asarray(truths, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return cm


def evaluate(predictions, truths):
    """Accuracy plus per-class, macro and support-weighted P/R/F1.

    Any 0/0 metric is 0. Macro averages run over all six classes.
    """
    predictions = [int(p) for p in predictions]
    truths = [int(t) for t in truths]
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not truths:
        raise EmptyInput("nothing to evaluate")
    cm = confusion_matrix(predictions, truths)
    n = len(truths)
    tp = np.diag(cm)
    pred_counts = cm.sum(axis=0)
    true_counts = cm.sum(axis=1)
    precision = [_div(int(tp[c]), int(pred_counts[c])) for c in range(N_CLASSES)]
    recall = [_div(int(tp[c]), int(true_counts[c])) for c in range(N_CLASSES)]
    f1 = [_div(2 * p * r, p + r) for p, r in zip(precision, recall)]
    support = [int(s) for s in true_counts]
    weights = [s / n for s in support]
    return EvalReport(
        accuracy=int(tp.sum()) / n,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=cm.tolist(),
        n_samples=n,
        macro_precision=sum(precision) / N_CLASSES,
        macro_recall=sum(recall) / N_CLASSES,
        macro_f1=sum(f1) / N_CLASSES,
        weighted_precision=sum(w * p for w, p in zip(weights, precision)),
        weighted_recall=sum(w * r for w, r in zip(weights, recall)),
        weighted_f1=sum(w * f for w, f in zip(weights, f1)),
    )


def stratified_folds(y, folds, seed):
    """Fold index per sample.

    Each class (in code order) is shuffled by one SplitMix64 stream and its
    members dealt round-robin into the folds.
    """
    y = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y, minlength=N_CLASSES)
    for code, n in enumerate(counts):
        if 0 < n < folds:
            raise ClassTooSmall(
                f"class {CategoryLabel(code).name} has {n} samples, fewer than {folds} folds")
    rng = SplitMix64(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    for code in range(N_CLASSES):
        members = [int(i) for i in np.flatnonzero(y == code)]
        rng.shuffle(members)
        for pos, i in enumerate(members):
            assignment[i] = pos % folds
    return assignment


@dataclass
class CVResult:
    mean_accuracy: float
    reports: list = field(default_factory=list)
    assignment: np.ndarray = None


def cross_validate(ds, model, folds=5, seed=0):
    """Stratified k-fold CV; ``model`` is an unfitted estimator or a kind name.

    The estimator standardises inside ``fit``, so the scaler is re-fitted on
    each fold's training part.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if isinstance(model, str):
        model = make_model(model)
    assignment = stratified_folds(ds.y, folds, seed)
    reports = []
    for fold in range(folds):
        held = assignment == fold
        est = clone(model).fit(ds.X[~held], ds.y[~held])
        reports.append(evaluate(est.predict(ds.X[held]), ds.y[held]))
    mean = sum(r.accuracy for r in reports) / folds
    return CVResult(mean, reports, assignment)


@dataclass
class GridSpec:
    model_kind: str
    grid: dict
    folds: int = 5
    seed: int = 0
    base_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("grid must be nonempty with at least one value per parameter")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")

    def points(self):
        """Cartesian product; parameter names sorted, values in given order."""
        names = sorted(self.grid)
        for values in itertools.product(*(self.grid[n] for n in names)):
            yield dict(zip(names, values))


def grid_search(ds, spec):
    """Return ``(best_params, [(params, mean_accuracy), ...])``.

    The earliest grid point wins ties.
    """
    table = []
    best, best_acc = None, -1.0
    for point in spec.points():
        model = make_model(spec.model_kind, **{**spec.base_params, **point})
        acc = cross_validate(ds, model, spec.folds, spec.seed).mean_accuracy
        table.append((point, acc))
        if acc > best_acc:
            best, best_acc = point, acc
    return best, table
