"""
Pairwise inter-annotator agreement and similarity-derived soft-label weights.

All pairwise metrics take two equal-length integer sequences restricted to the
samples both annotators labeled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotation_store import AnnotationMatrix

DEFAULT_MIN_OVERLAP = 3


def _pair(labels_a, labels_b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(labels_a, dtype=np.int64).ravel()
    b = np.asarray(labels_b, dtype=np.int64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"sequences differ in length ({a.size} vs {b.size})")
    if a.size == 0:
        raise ValueError("empty overlap: agreement is undefined")
    if a.min() < 0 or b.min() < 0:
        raise ValueError("class indices must be non-negative")
    return a, b


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = int(max(a.max(), b.max())) + 1
    return np.bincount(a * n + b, minlength=n * n).reshape(n, n).astype(float)


def cohen_kappa(labels_a, labels_b) -> float:
    """Cohen's kappa, ``(p_o - p_e) / (1 - p_e)``.

    When chance agreement is 1 (both raters constant on the same class) kappa is
    defined as 1 if the raters agree everywhere and 0 otherwise.
    """
    a, b = _pair(labels_a, labels_b)
    table = _contingency(a, b)
    total = table.sum()
    p_o = np.trace(table) / total
    p_e = float(np.dot(table.sum(axis=1), table.sum(axis=0))) / total**2
    if p_e >= 1.0:
        return 1.0 if p_o >= 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def krippendorff_alpha(labels_a, labels_b) -> float:
    """Nominal Krippendorff's alpha for two coders with no missing values."""
    a, b = _pair(labels_a, labels_b)
    table = _contingency(a, b)
    coincidence = table + table.T
    n_c = coincidence.sum(axis=1)
    n = n_c.sum()
    expected_pairs = n * (n - 1) - float(np.sum(n_c * (n_c - 1)))
    if expected_pairs <= 0:
        # a single value was used throughout: no disagreement is possible
        return 1.0
    observed = (n - 1) * float(np.trace(coincidence)) - float(np.sum(n_c * (n_c - 1)))
    return float(observed / expected_pairs)


def pearson_similarity(labels_a, labels_b) -> float:
    """Pearson correlation of class codes; 0 when either side is constant."""
    a, b = _pair(labels_a, labels_b)
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.dot(da, da))
    sb = float(np.dot(db, db))
    if sa == 0.0 or sb == 0.0:
        return 0.0
    r = float(np.dot(da, db)) / np.sqrt(sa * sb)
    return float(np.clip(r, -1.0, 1.0))


METRICS = {
    "cohen_kappa": cohen_kappa,
    "krippendorff_alpha": krippendorff_alpha,
    "pearson": pearson_similarity,
}

METRIC_ALIASES = {
    "kappa": "cohen_kappa",
    "cohen": "cohen_kappa",
    "alpha": "krippendorff_alpha",
    "krippendorff": "krippendorff_alpha",
    "pearson_correlation": "pearson",
}


def resolve_metric(name: str) -> str:
    key = METRIC_ALIASES.get(name, name)
    if key not in METRICS:
        raise ValueError(f"unknown similarity metric {name!r}; choose from {sorted(METRICS)}")
    return key


@dataclass
class SimilarityMatrix:
    """Symmetric annotator x annotator agreement matrix with unit diagonal."""

    values: np.ndarray
    metric: str
    overlap_counts: np.ndarray
    version: int = 0
    min_overlap: int = DEFAULT_MIN_OVERLAP
    include_imputed: bool = field(default=False)

    @property
    def num_annotators(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        """Write the CSV matrix (6 decimals) and a ``.json`` sidecar next to it."""
        path = Path(path)
        rows = [",".join(f"{v:.6f}" for v in row) for row in self.values]
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        sidecar = {
            "metric": self.metric,
            "version": self.version,
            "min_overlap": self.min_overlap,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SimilarityMatrix":
        path = Path(path)
        values = np.loadtxt(path, delimiter=",", ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        k = values.shape[0]
        return cls(
            values=values,
            metric=meta["metric"],
            overlap_counts=np.zeros((k, k), dtype=np.int64),
            version=int(meta["version"]),
            min_overlap=int(meta["min_overlap"]),
        )


def build_similarity_matrix(
    matrix: AnnotationMatrix,
    metric: str = "cohen_kappa",
    include_imputed: bool = False,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
    previous: SimilarityMatrix | None = None,
) -> SimilarityMatrix:
    """Agreement between every annotator pair on their jointly labeled samples.

    Pairs sharing fewer than ``min_overlap`` samples get similarity 0. The
    returned version is ``previous.version + 1`` (or 0 for a first build).
    """
    k = matrix.num_annotators
    if k < 2:
        raise ValueError("a similarity matrix needs at least two annotators")
    metric = resolve_metric(metric)
    fn = METRICS[metric]
    usable = matrix.usable_mask(include_imputed)
    labels = matrix.labels
    values = np.eye(k)
    overlap = usable.T.astype(np.int64) @ usable.astype(np.int64)
    for i in range(k):
        for j in range(i + 1, k):
            if overlap[i, j] < max(min_overlap, 1):
                continue
            joint = usable[:, i] & usable[:, j]
            v = fn(labels[joint, i], labels[joint, j])
            values[i, j] = values[j, i] = v
    version = 0 if previous is None else previous.version + 1
    return SimilarityMatrix(values, metric, overlap, version, min_overlap, include_imputed)


def soft_label_weights(sim, target: int, available) -> np.ndarray:
    """Normalized contribution weights of ``available`` annotators to ``target``.

    Similarities are clamped at zero and normalized to sum to one; when every
    clamped weight is zero the weights fall back to uniform.
    """
    values = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim, dtype=float)
    available = np.asarray(available, dtype=np.int64).ravel()
    if available.size == 0:
        raise ValueError("no available annotators to build a soft label from")
    if np.any(available == target):
        raise ValueError(f"target annotator {target} cannot contribute to its own soft label")
    raw = np.maximum(values[available, target], 0.0)
    total = raw.sum()
    if total <= 0.0:
        return np.full(available.size, 1.0 / available.size)
    return raw / total


def weight_tensor(sim_values: np.ndarray, contributors: np.ndarray) -> np.ndarray:
    """Batched :func:`soft_label_weights` for every (sample, target) at once.

    Parameters
    ----------
    sim_values : ndarray, shape (K, K)
    contributors : bool ndarray, shape (B, K)
        Which annotators may contribute on each sample.

    Returns
    -------
    ndarray, shape (B, K, K)
        ``out[b, k, j]`` is the weight of annotator ``j`` in the soft label for
        target ``k`` on sample ``b``. Rows with no eligible contributor are zero.
    """
    k = sim_values.shape[0]
    clamped = np.maximum(sim_values.T, 0.0) * (1.0 - np.eye(k))
    eligible = contributors[:, None, :] & ~np.eye(k, dtype=bool)[None, :, :]
    raw = clamped[None, :, :] * eligible
    total = raw.sum(axis=2, keepdims=True)
    count = eligible.sum(axis=2, keepdims=True)
    uniform = np.divide(eligible, count, out=np.zeros(eligible.shape), where=count > 0)
    normalized = np.divide(raw, total, out=np.zeros(raw.shape), where=total > 0)
    return np.where(total > 0, normalized, uniform)
