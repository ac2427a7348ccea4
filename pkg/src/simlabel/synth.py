"""
Synthetic multi-annotator datasets with planted ground truth.

Each sample has a true class drawn from a prior and Gaussian features around a
class mean. Annotators are partitioned into groups; every member labels by
sampling from its own confusion matrix, a perturbed copy of the group's base
matrix. Cells are then removed completely at random with a per-annotator rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotation_store import AnnotationMatrix, ValidationError

# per-annotator missing rates of a 10-annotator video emotion corpus, 2311 samples
AMER2_MISSING_RATES = (0.764, 0.767, 0.913, 0.759, 0.787, 0.764, 0.850, 0.765, 0.765, 0.764)
AMER2_NUM_SAMPLES = 2311
AMER2_NUM_CLASSES = 8


@dataclass
class AnnotatorGroup:
    members: list
    base_confusion: np.ndarray
    perturbation: float = 0.0

    def __post_init__(self):
        self.base_confusion = np.asarray(self.base_confusion, dtype=float)
        self.members = [int(m) for m in self.members]


@dataclass
class GeneratorSpec:
    num_samples: int
    num_classes: int
    feature_dim: int
    class_feature_means: np.ndarray
    groups: list
    per_annotator_missing_rate: np.ndarray
    class_prior: np.ndarray | None = None
    feature_noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.class_feature_means = np.asarray(self.class_feature_means, dtype=float)
        self.per_annotator_missing_rate = np.asarray(self.per_annotator_missing_rate, dtype=float)
        if self.class_prior is None:
            self.class_prior = np.full(self.num_classes, 1.0 / self.num_classes)
        self.class_prior = np.asarray(self.class_prior, dtype=float)
        self.groups = [g if isinstance(g, AnnotatorGroup) else AnnotatorGroup(**g) for g in self.groups]
        self.validate()

    @property
    def num_annotators(self) -> int:
        return self.per_annotator_missing_rate.size

    def validate(self) -> None:
        n, k = self.num_classes, self.num_annotators
        if self.num_samples < 1 or n < 2 or self.feature_dim < 1:
            raise ValidationError("num_samples, num_classes >= 2 and feature_dim must be positive")
        p = self.class_prior
        if p.shape != (n,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
            raise ValidationError("class_prior must be a length-N probability vector")
        if self.class_feature_means.shape != (n, self.feature_dim):
            raise ValidationError("class_feature_means must have shape (N, d)")
        if not self.feature_noise_sigma > 0:
            raise ValidationError("feature_noise_sigma must be positive")
        m = self.per_annotator_missing_rate
        if np.any(m < 0) or np.any(m >= 1):
            raise ValidationError("missing rates must lie in [0, 1)")
        members = sorted(a for g in self.groups for a in g.members)
        if members != list(range(k)):
            raise ValidationError("groups must partition annotators 0..K-1")
        for gi, g in enumerate(self.groups):
            c = g.base_confusion
            if c.shape != (n, n) or np.any(c < 0) or not np.allclose(c.sum(axis=1), 1.0, atol=1e-9):
                raise ValidationError(f"group {gi}: base confusion must be N x N row-stochastic")
            if g.perturbation < 0:
                raise ValidationError(f"group {gi}: perturbation must be non-negative")

    def to_dict(self) -> dict:
        return {
            "num_samples": int(self.num_samples),
            "num_classes": int(self.num_classes),
            "feature_dim": int(self.feature_dim),
            "class_prior": self.class_prior.tolist(),
            "class_feature_means": self.class_feature_means.tolist(),
            "feature_noise_sigma": float(self.feature_noise_sigma),
            "groups": [
                {"members": g.members, "base_confusion": g.base_confusion.tolist(),
                 "perturbation": float(g.perturbation)}
                for g in self.groups
            ],
            "per_annotator_missing_rate": self.per_annotator_missing_rate.tolist(),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorSpec":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(f"invalid generator spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


@dataclass
class GroundTruth:
    true_classes: np.ndarray
    pre_removal_labels: np.ndarray
    groups: np.ndarray
    confusions: np.ndarray
    extra: dict = field(default_factory=dict)

    def subset(self, indices) -> "GroundTruth":
        idx = np.asarray(indices, dtype=np.int64)
        return GroundTruth(self.true_classes[idx], self.pre_removal_labels[idx],
                           self.groups, self.confusions, dict(self.extra))

    def to_dict(self) -> dict:
        return {
            "true_classes": self.true_classes.tolist(),
            "pre_removal_labels": self.pre_removal_labels.tolist(),
            "groups": self.groups.tolist(),
            "confusions": self.confusions.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(np.asarray(doc["true_classes"], dtype=np.int64),
                   np.asarray(doc["pre_removal_labels"], dtype=np.int64),
                   np.asarray(doc["groups"], dtype=np.int64),
                   np.asarray(doc["confusions"], dtype=float))


def perturb_confusion(base: np.ndarray, magnitude: float, rng) -> np.ndarray:
    """Add Gaussian noise to each row, clip at zero and renormalize."""
    if magnitude == 0:
        return base.copy()
    noisy = np.clip(base + magnitude * rng.standard_normal(base.shape), 0.0, None)
    sums = noisy.sum(axis=1, keepdims=True)
    # a row clipped to all zeros keeps its base distribution
    return np.where(sums > 0, noisy / np.where(sums > 0, sums, 1.0), base)


def generate(spec: GeneratorSpec) -> tuple[AnnotationMatrix, GroundTruth]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, k, s = spec.num_classes, spec.num_annotators, spec.num_samples

    confusions = np.zeros((k, n, n))
    group_of = np.zeros(k, dtype=np.int64)
    for gi, g in enumerate(spec.groups):
        for a in g.members:
            confusions[a] = perturb_confusion(g.base_confusion, g.perturbation, rng)
            group_of[a] = gi

    y = rng.choice(n, size=s, p=spec.class_prior)
    x = spec.class_feature_means[y] + spec.feature_noise_sigma * rng.standard_normal((s, spec.feature_dim))

    # inverse-CDF sampling of each annotator label from its confusion row
    cdf = np.cumsum(confusions[:, y, :], axis=2)  # (K, S, N)
    u = rng.random((k, s, 1))
    labels = np.minimum((u > cdf).sum(axis=2), n - 1).T  # (S, K)

    missing = rng.random((s, k)) < spec.per_annotator_missing_rate[None, :]
    for a in range(k):
        if missing[:, a].all():
            missing[rng.integers(s), a] = False
    observed = np.where(missing, None, labels).astype(object)

    matrix = AnnotationMatrix(x, observed, n, metadata={
        "declared_missing_rates": [float(r) for r in spec.per_annotator_missing_rate],
    })
    truth = GroundTruth(y.astype(np.int64), labels.astype(np.int64), group_of, confusions)
    return matrix, truth


def realized_missing_rates(matrix: AnnotationMatrix) -> np.ndarray:
    return matrix.missing_rates()


def mapped_confusion(num_classes: int, accuracy: float, mapping=None) -> np.ndarray:
    """Confusion matrix sending true class ``c`` to ``mapping[c]`` with probability ``accuracy``.

    The remaining mass is spread evenly over the other classes. ``mapping``
    defaults to the identity.
    """
    n = num_classes
    mapping = np.arange(n) if mapping is None else np.asarray(mapping, dtype=np.int64)
    c = np.full((n, n), (1.0 - accuracy) / (n - 1))
    c[np.arange(n), mapping] = accuracy
    return c


def two_group_spec(
    num_samples: int = 2000,
    num_annotators: int = 10,
    num_classes: int = 4,
    feature_dim: int = 100,
    missing_rates=None,
    seed: int = 0,
    class_separation: float = 0.3,
    feature_noise_sigma: float = 1.0,
    accuracy: float = 0.99,
    second_accuracy: float | None = 0.95,
    tendency: float = 0.0,
    swapped_pairs: int | None = None,
    perturbation: float = 0.03,
) -> GeneratorSpec:
    """Planted benchmark with two annotator groups that label differently.

    Group 0 reports the true class with probability ``accuracy``, group 1 with
    probability ``second_accuracy`` (defaults to ``accuracy``). Group 1 further
    shifts ``tendency`` of its diagonal mass onto a partner class for the first
    ``swapped_pairs`` class pairs (all pairs by default). Either difference
    makes annotators agree more within their group than across groups.
    Missing rates default to an even spread over [0.60, 0.85].
    """
    if missing_rates is None:
        missing_rates = np.linspace(0.60, 0.85, num_annotators)
    if swapped_pairs is None:
        swapped_pairs = num_classes // 2
    if second_accuracy is None:
        second_accuracy = accuracy
    if not 0 <= tendency <= second_accuracy:
        raise ValidationError("tendency must lie in [0, second_accuracy]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    means = class_separation * rng.standard_normal((num_classes, feature_dim))
    mapping = np.arange(num_classes)
    for p in range(swapped_pairs):
        mapping[[2 * p, 2 * p + 1]] = mapping[[2 * p + 1, 2 * p]]
    base0 = mapped_confusion(num_classes, accuracy)
    plain = mapped_confusion(num_classes, second_accuracy)
    shifted = mapped_confusion(num_classes, second_accuracy, mapping)
    share = tendency / second_accuracy if second_accuracy else 0.0
    base1 = (1.0 - share) * plain + share * shifted
    half = num_annotators // 2
    groups = [
        AnnotatorGroup(list(range(half)), base0, perturbation),
        AnnotatorGroup(list(range(half, num_annotators)), base1, perturbation),
    ]
    return GeneratorSpec(
        num_samples=num_samples,
        num_classes=num_classes,
        feature_dim=feature_dim,
        class_feature_means=means,
        groups=groups,
        per_annotator_missing_rate=np.asarray(missing_rates, dtype=float),
        feature_noise_sigma=feature_noise_sigma,
        seed=seed,
    )


def amer2_profile_spec(seed: int = 0, feature_dim: int = 16) -> GeneratorSpec:
    """Ten annotators, eight classes, 2311 samples, missing rates as in AMER2."""
    return two_group_spec(
        num_samples=AMER2_NUM_SAMPLES,
        num_annotators=len(AMER2_MISSING_RATES),
        num_classes=AMER2_NUM_CLASSES,
        feature_dim=feature_dim,
        missing_rates=AMER2_MISSING_RATES,
        seed=seed,
    )
