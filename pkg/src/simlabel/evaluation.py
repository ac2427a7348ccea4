"""
Held-out scoring of annotator models.

``accuracy`` scores each model against its own annotator's observed test labels.
``dic`` (difference of inter-annotator consistency) compares pairwise Cohen's
kappa between the annotators' reference labels with pairwise kappa between the
models' predicted labels on the same samples, averaging the absolute gaps over
annotator pairs. This is a local definition; the label ``DIC (local
definition)`` is used in exported reports.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .agreement import DEFAULT_MIN_OVERLAP, cohen_kappa
from .annotation_store import AnnotationMatrix
from .model import predict_all

DIC_LABEL = "DIC (local definition)"


def predicted_labels(models, features) -> np.ndarray:
    """Argmax prediction of every model, shape (num_samples, K). Ties go to the lowest class."""
    return np.argmax(predict_all(models, features), axis=-1)


def accuracy(models, test: AnnotationMatrix) -> np.ndarray:
    """Per-annotator accuracy on observed test cells.

    Annotators without any observed test label get ``NaN``.
    """
    if test.num_samples == 0:
        raise ValueError("empty test split")
    pred = predicted_labels(models, test.features)
    obs = test.observed_mask
    labels = test.labels
    acc = np.full(test.num_annotators, np.nan)
    for k in range(test.num_annotators):
        if obs[:, k].any():
            acc[k] = float(np.mean(pred[obs[:, k], k] == labels[obs[:, k], k]))
    return acc


def dic(models, test: AnnotationMatrix, reference=None, min_overlap: int = DEFAULT_MIN_OVERLAP) -> float:
    """Mean absolute gap between reference and predicted pairwise kappa.

    Parameters
    ----------
    reference : array_like, shape (num_test_samples, K), optional
        Reference labels (negative entries mark missing). Defaults to the
        observed test labels; pass the pre-removal labels of a synthetic
        ground truth to score against complete annotations.
    """
    pred = predicted_labels(models, test.features)
    if reference is None:
        ref = np.where(test.observed_mask, test.labels, -1)
    else:
        ref = np.asarray(reference, dtype=np.int64)
        if ref.shape != pred.shape:
            raise ValueError(f"reference shape {ref.shape} does not match {pred.shape}")
    have = ref >= 0
    gaps = []
    k = ref.shape[1]
    for i in range(k):
        for j in range(i + 1, k):
            joint = have[:, i] & have[:, j]
            if joint.sum() < max(min_overlap, 1):
                continue
            gt = cohen_kappa(ref[joint, i], ref[joint, j])
            pr = cohen_kappa(pred[joint, i], pred[joint, j])
            gaps.append(abs(gt - pr))
    if not gaps:
        raise ValueError("no annotator pair has enough jointly labeled test samples")
    return float(np.mean(gaps))


@dataclass
class RunReport:
    per_annotator_accuracy: list
    dic: float
    mode: str
    seed: int
    dataset: str
    epochs: int
    imputations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        vals = [a for a in self.per_annotator_accuracy if a is not None]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def absent_annotators(self) -> list:
        return [k for k, a in enumerate(self.per_annotator_accuracy) if a is None]

    @classmethod
    def from_arrays(cls, acc, dic_value, mode, seed, dataset, epochs, imputations=0, **extra):
        per = [None if np.isnan(a) else float(a) for a in np.asarray(acc, dtype=float)]
        return cls(per, float(dic_value), mode, int(seed), dataset, int(epochs), int(imputations), extra)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["mean_accuracy"] = self.mean_accuracy
        doc["absent_annotators"] = self.absent_annotators
        doc["dic_definition"] = DIC_LABEL
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        return cls(doc["per_annotator_accuracy"], doc["dic"], doc["mode"], doc["seed"],
                   doc["dataset"], doc["epochs"], doc.get("imputations", 0), doc.get("extra", {}))

    def accuracy_csv(self) -> str:
        k = len(self.per_annotator_accuracy)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + [f"A_{i + 1}" for i in range(k)] + ["Avg"])
        w.writerow([self.mode] + [_fmt(a) for a in self.per_annotator_accuracy] + [_fmt(self.mean_accuracy)])
        return buf.getvalue()

    def dic_csv(self) -> str:
        return f"dataset,policy,dic\n{self.dataset},{self.mode},{_fmt(self.dic)}\n"


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return f"{v:.6f}"


@dataclass
class ComparisonRow:
    label: str
    n_runs: int
    per_annotator_mean: list
    per_annotator_std: list
    mean_accuracy: float
    std_accuracy: float
    dic_mean: float
    dic_std: float


@dataclass
class ComparisonTable:
    dataset: str
    rows: list

    def row(self, label: str) -> ComparisonRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def accuracy_csv(self) -> str:
        k = len(self.rows[0].per_annotator_mean) if self.rows else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + [f"A_{i + 1}" for i in range(k)] + ["Avg", "Avg_std", "n_seeds"])
        for r in self.rows:
            w.writerow([r.label] + [_fmt(a) for a in r.per_annotator_mean]
                       + [_fmt(r.mean_accuracy), _fmt(r.std_accuracy), r.n_runs])
        return buf.getvalue()

    def dic_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "policy", "dic", "dic_std"])
        for r in self.rows:
            w.writerow([self.dataset, r.label, _fmt(r.dic_mean), _fmt(r.dic_std)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"dataset": self.dataset, "dic_definition": DIC_LABEL,
               "rows": [asdict(r) for r in self.rows]}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def compare(reports, key=lambda r: r.mode) -> ComparisonTable:
    """Aggregate reports into one row per ``key`` (mean and population std over seeds)."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to compare")
    datasets = {r.dataset for r in reports}
    if len(datasets) > 1:
        raise ValueError(f"reports come from different datasets: {sorted(datasets)}")
    groups: dict = {}
    for r in reports:
        groups.setdefault(key(r), []).append(r)
    rows = []
    for label, rs in groups.items():
        acc = np.array([[np.nan if a is None else a for a in r.per_annotator_accuracy] for r in rs])
        per_mean = [None if np.all(np.isnan(c)) else float(np.nanmean(c)) for c in acc.T]
        per_std = [None if np.all(np.isnan(c)) else float(np.nanstd(c)) for c in acc.T]
        means = np.array([r.mean_accuracy for r in rs])
        dics = np.array([r.dic for r in rs])
        rows.append(ComparisonRow(str(label), len(rs), per_mean, per_std,
                                  float(means.mean()), float(means.std()),
                                  float(dics.mean()), float(dics.std())))
    return ComparisonTable(datasets.pop(), rows)
