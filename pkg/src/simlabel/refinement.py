"""
Training orchestration: supervised, similarity-weighted semi-supervised and
skipped updates per cell, with confidence-gated imputation of missing labels
and re-estimation of the annotator similarity matrix.

Three modes are supported:

``skip``
    Models only learn from cells with a label; missing cells produce no update.
``sim_weighted``
    Missing cells are supervised by a soft label built from the current
    predictions of the annotators who did label the sample, weighted by their
    similarity to the target annotator.
``sim_weighted_confidence``
    As ``sim_weighted``; additionally soft labels whose confidence reaches the
    threshold are imputed into the dataset and the similarity matrix is
    recomputed from the updated labels.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .agreement import (
    SimilarityMatrix,
    build_similarity_matrix,
    resolve_metric,
    weight_tensor,
)
from .annotation_store import IMPUTED, MISSING, OBSERVED, AnnotationMatrix, LabelView
from .model import AnnotatorModel, NumericError, ce_loss, kl_loss, softmax
from .soft_label import CONFIDENCE_VARIANTS, SoftLabelResult, confidence_variant

SKIP = "skip"
SIM_WEIGHTED = "sim_weighted"
SIM_WEIGHTED_CONFIDENCE = "sim_weighted_confidence"
MODES = (SKIP, SIM_WEIGHTED, SIM_WEIGHTED_CONFIDENCE)

SCHEDULES = ("per_epoch", "per_imputation", "every_m_imputations")

SUPERVISED = "supervised"
SEMI_SUPERVISED = "semi_supervised"
SKIPPED = "skip"


class TrainingError(RuntimeError):
    """Raised when training produces a non-finite loss.

    ``trace`` and ``matrix`` hold the epochs completed before the abort and the
    partially imputed data, so callers can keep partial artifacts.
    """

    def __init__(self, message, trace=None, matrix=None):
        super().__init__(message)
        self.trace = trace
        self.matrix = matrix


class PolicyError(ValueError):
    pass


@dataclass
class TrainingPolicy:
    """Every knob of a training run.

    A ``confidence_threshold`` above 1 can never be reached and disables
    imputation.
    """

    mode: str = SIM_WEIGHTED_CONFIDENCE
    confidence_threshold: float = 0.6
    lambda_kl: float = 1.0
    recompute_schedule: str = "per_epoch"
    recompute_every: int = 1
    imputed_as_hard_labels: bool = False
    max_epochs: int = 30
    seed: int = 0
    learning_rate: float = 0.1
    momentum: float = 0.0
    batch_size: int = 32
    kl_direction: str = "forward"
    confidence_variant: str = "combined"
    min_overlap: int = 3
    similarity_include_imputed: bool = True
    init_scale: float = 0.01

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise PolicyError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if not self.confidence_threshold >= 0:
            raise PolicyError("confidence_threshold: must be >= 0")
        if not self.lambda_kl >= 0:
            raise PolicyError("lambda_kl: must be >= 0")
        if self.recompute_schedule not in SCHEDULES:
            raise PolicyError(f"recompute_schedule: expected one of {SCHEDULES}")
        if int(self.recompute_every) < 1:
            raise PolicyError("recompute_every: must be >= 1")
        if int(self.max_epochs) < 0:
            raise PolicyError("max_epochs: must be >= 0")
        if not self.learning_rate > 0:
            raise PolicyError("learning_rate: must be > 0")
        if not 0 <= self.momentum < 1:
            raise PolicyError("momentum: must be in [0, 1)")
        if int(self.batch_size) < 1:
            raise PolicyError("batch_size: must be >= 1")
        if self.kl_direction not in ("forward", "reverse"):
            raise PolicyError("kl_direction: expected 'forward' or 'reverse'")
        if self.confidence_variant not in CONFIDENCE_VARIANTS:
            raise PolicyError(f"confidence_variant: expected one of {CONFIDENCE_VARIANTS}")
        if int(self.min_overlap) < 1:
            raise PolicyError("min_overlap: must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingPolicy":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise PolicyError(f"unknown policy field(s): {', '.join(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "TrainingPolicy":
        doc = self.to_dict()
        doc.update(changes)
        return TrainingPolicy(**doc)


@dataclass
class EpochRecord:
    epoch: int
    ce_loss: float
    kl_loss: float
    imputations: int
    cum_imputations: int
    sm_version: int
    supervised_updates: tuple
    semi_supervised_updates: tuple
    skipped_updates: tuple


TRACE_COLUMNS = ("epoch", "ce_loss", "kl_loss", "imputations", "cum_imputations", "sm_version")


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def cum_imputations(self) -> int:
        return self.records[-1].cum_imputations if self.records else 0

    def total(self, kind: str) -> np.ndarray:
        """Per-annotator totals of ``supervised``, ``semi_supervised`` or ``skipped`` updates."""
        attr = {"supervised": "supervised_updates",
                "semi_supervised": "semi_supervised_updates",
                "skipped": "skipped_updates"}[kind]
        if not self.records:
            return np.zeros(0, dtype=np.int64)
        return np.sum([getattr(r, attr) for r in self.records], axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.epoch, f"{r.ce_loss:.10f}", f"{r.kl_loss:.10f}",
                        r.imputations, r.cum_imputations, r.sm_version])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


@dataclass
class TrainResult:
    models: list
    similarity: SimilarityMatrix
    trace: TrainingTrace
    matrix: AnnotationMatrix

    @property
    def imputation_log(self):
        return self.matrix.imputation_log


def select_cell_action(cell_state: int, view: LabelView, policy: TrainingPolicy, annotator: int) -> str:
    """Which update a model receives from one cell.

    ``view`` lists the annotators with an observed label on the sample.
    """
    if cell_state == OBSERVED:
        return SUPERVISED
    if cell_state == IMPUTED and policy.imputed_as_hard_labels:
        return SUPERVISED
    if policy.mode == SKIP:
        return SKIPPED
    if any(a != annotator for a in view.present_annotators):
        return SEMI_SUPERVISED
    return SKIPPED


def refinement_step(
    soft: SoftLabelResult,
    policy: TrainingPolicy,
    matrix: AnnotationMatrix,
    sample: int,
    epoch: int,
) -> str:
    """Impute ``soft``'s argmax into a missing cell when its confidence reaches the threshold.

    Returns ``"imputed"`` or ``"rejected"``.
    """
    if policy.mode != SIM_WEIGHTED_CONFIDENCE:
        raise PolicyError("refinement only runs in sim_weighted_confidence mode")
    if soft.confidence >= policy.confidence_threshold:
        matrix.impute(sample, soft.target_annotator, soft.argmax_label,
                      soft.confidence, epoch, threshold=policy.confidence_threshold)
        return "imputed"
    return "rejected"


def _action_masks(state, policy):
    observed = state == OBSERVED
    supervised = observed.copy()
    if policy.imputed_as_hard_labels:
        supervised |= state == IMPUTED
    if policy.mode == SKIP:
        return observed, supervised, np.zeros_like(supervised)
    n_obs = observed.sum(axis=1, keepdims=True)
    others = (n_obs - observed) > 0
    semi = ~supervised & others
    return observed, supervised, semi


def train(matrix: AnnotationMatrix, policy: TrainingPolicy, metric: str = "cohen_kappa") -> TrainResult:
    """Train one model per annotator on ``matrix``.

    The input matrix is not modified; imputations are written into the copy
    returned as ``result.matrix``.
    """
    policy.validate()
    k = matrix.num_annotators
    if k < 2:
        raise ValueError("training needs at least two annotators")
    metric = resolve_metric(metric)
    data = matrix.copy()
    n_cls, dim, n = data.num_classes, data.feature_dim, data.num_samples
    feats = data.features

    shuffle_seq, init_seq = np.random.SeedSequence(policy.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    init_rng = np.random.default_rng(init_seq)

    weights = policy.init_scale * init_rng.standard_normal((k, n_cls, dim))
    bias = np.zeros((k, n_cls))
    models = [
        AnnotatorModel(a, weights[a], bias[a], policy.learning_rate, policy.momentum)
        for a in range(k)
    ]

    sim = build_similarity_matrix(data, metric, include_imputed=False, min_overlap=policy.min_overlap)
    reverse_kl = policy.kl_direction == "reverse"
    refine = policy.mode == SIM_WEIGHTED_CONFIDENCE
    trace = TrainingTrace()
    cum = 0
    dirty = False
    pending = 0

    def recompute():
        nonlocal sim, dirty, pending
        sim = build_similarity_matrix(
            data, metric,
            include_imputed=policy.similarity_include_imputed,
            min_overlap=policy.min_overlap,
            previous=sim,
        )
        dirty = False
        pending = 0

    for epoch in range(1, int(policy.max_epochs) + 1):
        order = shuffle_rng.permutation(n)
        ce_sum = kl_sum = 0.0
        ce_cnt = kl_cnt = 0
        imputed_now = 0
        sup_cnt = np.zeros(k, dtype=np.int64)
        semi_cnt = np.zeros(k, dtype=np.int64)
        skip_cnt = np.zeros(k, dtype=np.int64)

        for start in range(0, n, int(policy.batch_size)):
            idx = order[start:start + int(policy.batch_size)]
            x = feats[idx]
            probs = softmax(np.einsum("bd,knd->bkn", x, weights) + bias)
            state = data._state[idx]
            labels = data._labels[idx]
            observed, supervised, semi = _action_masks(state, policy)
            sup_cnt += supervised.sum(axis=0)
            semi_cnt += semi.sum(axis=0)
            skip_cnt += (~supervised & ~semi).sum(axis=0)

            grad = np.zeros_like(probs)
            if supervised.any():
                loss, g = ce_loss(probs[supervised], labels[supervised])
                _check_finite(loss, epoch, idx, supervised, "cross-entropy", trace, data)
                grad[supervised] = g
                ce_sum += float(loss.sum())
                ce_cnt += loss.size

            if semi.any():
                wt = weight_tensor(sim.values, observed)
                soft = np.einsum("bkj,bjn->bkn", wt, probs)
                if refine:
                    conf = confidence_variant(soft, policy.confidence_variant)
                    gate = semi & (state == MISSING) & (conf >= policy.confidence_threshold)
                    for bi, a in np.argwhere(gate):
                        contrib = np.flatnonzero(wt[bi, a] > 0)
                        result = SoftLabelResult(
                            target_annotator=int(a),
                            distribution=soft[bi, a],
                            confidence=float(conf[bi, a]),
                            contributors=tuple((int(j), float(wt[bi, a, j])) for j in contrib),
                        )
                        if refinement_step(result, policy, data, int(idx[bi]), epoch) == "imputed":
                            imputed_now += 1
                            dirty = True
                            pending += 1
                            if policy.recompute_schedule == "per_imputation" or (
                                policy.recompute_schedule == "every_m_imputations"
                                and pending >= policy.recompute_every
                            ):
                                recompute()
                loss, g = kl_loss(probs[semi], soft[semi], reverse=reverse_kl)
                _check_finite(loss, epoch, idx, semi, "KL", trace, data)
                grad[semi] = policy.lambda_kl * g
                kl_sum += float(loss.sum())
                kl_cnt += loss.size

            active = (supervised | semi).any(axis=0)
            if not active.any():
                continue
            gw = np.einsum("bkn,bd->knd", grad, x) / len(idx)
            gb = grad.sum(axis=0) / len(idx)
            for a in np.flatnonzero(active):
                try:
                    models[a].apply_update((gw[a], gb[a]))
                except NumericError as exc:
                    raise TrainingError(f"{exc} at epoch {epoch}", trace=trace, matrix=data) from exc

        if refine and dirty and policy.recompute_schedule == "per_epoch":
            recompute()
        cum += imputed_now
        trace.records.append(EpochRecord(
            epoch=epoch,
            ce_loss=ce_sum / ce_cnt if ce_cnt else 0.0,
            kl_loss=kl_sum / kl_cnt if kl_cnt else 0.0,
            imputations=imputed_now,
            cum_imputations=cum,
            sm_version=sim.version,
            supervised_updates=tuple(int(v) for v in sup_cnt),
            semi_supervised_updates=tuple(int(v) for v in semi_cnt),
            skipped_updates=tuple(int(v) for v in skip_cnt),
        ))

    return TrainResult(models, sim, trace, data)


def _check_finite(loss, epoch, idx, mask, kind, trace=None, data=None):
    if np.all(np.isfinite(loss)):
        return
    bad = int(np.flatnonzero(~np.isfinite(loss))[0])
    bi, a = np.argwhere(mask)[bad]
    raise TrainingError(
        f"non-finite {kind} loss at epoch {epoch}, sample {int(idx[bi])}, annotator {int(a)}",
        trace=trace, matrix=data,
    )
