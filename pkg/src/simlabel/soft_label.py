"""
Similarity-weighted soft labels for missing annotations and their confidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agreement import soft_label_weights

CONFIDENCE_VARIANTS = ("max_only", "entropy_only", "combined")


def generate_soft_label(predictions, weights) -> np.ndarray:
    """Convex combination of contributor predictions.

    Parameters
    ----------
    predictions : array_like, shape (m, N)
        Predicted class distributions of the ``m`` contributing annotators.
    weights : array_like, shape (m,)
        Non-negative weights summing to one.
    """
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if p.shape[0] == 0 or w.size == 0:
        raise ValueError("a soft label needs at least one contributor")
    if w.size != p.shape[0]:
        raise ValueError(f"{w.size} weights for {p.shape[0]} predictions")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    return w @ p


def entropy(dist) -> np.ndarray:
    """Shannon entropy in nats along the last axis (``0 log 0 = 0``)."""
    p = np.asarray(dist, dtype=float)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logp, axis=-1)


def normalized_certainty(dist) -> np.ndarray:
    """``1 - H[p] / log N``, clipped to [0, 1]."""
    p = np.asarray(dist, dtype=float)
    n = p.shape[-1]
    if n < 2:
        raise ValueError("confidence needs at least two classes")
    return np.clip(1.0 - entropy(p) / np.log(n), 0.0, 1.0)


def confidence(dist):
    """Peak probability times one minus normalized entropy, in [0, 1]."""
    p = np.asarray(dist, dtype=float)
    c = np.clip(p.max(axis=-1) * normalized_certainty(p), 0.0, 1.0)
    return float(c) if c.ndim == 0 else c


def confidence_variant(dist, variant: str = "combined"):
    p = np.asarray(dist, dtype=float)
    if variant == "combined":
        return confidence(p)
    if variant == "max_only":
        c = p.max(axis=-1)
    elif variant == "entropy_only":
        c = normalized_certainty(p)
    else:
        raise ValueError(f"unknown confidence variant {variant!r}; choose from {CONFIDENCE_VARIANTS}")
    return float(c) if np.ndim(c) == 0 else c


@dataclass(frozen=True)
class SoftLabelResult:
    target_annotator: int
    distribution: np.ndarray
    confidence: float
    contributors: tuple[tuple[int, float], ...]

    @property
    def argmax_label(self) -> int:
        # np.argmax returns the first maximum, so ties go to the lowest class
        return int(np.argmax(self.distribution))


def make_soft_label(
    target: int,
    predictions,
    sim,
    available,
    variant: str = "combined",
) -> SoftLabelResult:
    """Build the soft label for ``target`` from the ``available`` annotators.

    ``predictions`` is indexed by annotator, shape (K, N); only the rows listed
    in ``available`` are used.
    """
    available = np.asarray(available, dtype=np.int64).ravel()
    w = soft_label_weights(sim, target, available)
    preds = np.asarray(predictions, dtype=float)[available]
    dist = generate_soft_label(preds, w)
    return SoftLabelResult(
        target_annotator=int(target),
        distribution=dist,
        confidence=float(confidence_variant(dist, variant)),
        contributors=tuple((int(a), float(x)) for a, x in zip(available, w)),
    )
