"""
Per-annotator multinomial logistic regression and the two training losses.

Losses return their value together with the gradient with respect to the
logits; :func:`param_gradient` maps a logit gradient to the weight/bias
gradient of a linear model. All functions broadcast over leading axes, the last
axis indexing classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = 1e-12


class NumericError(FloatingPointError):
    """Raised when a gradient or parameter update is not finite."""


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def is_distribution(p, atol: float = 1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= 0) and np.allclose(p.sum(axis=-1), 1.0, atol=atol, rtol=0))


def ce_loss(pred, label):
    """Cross-entropy against a one-hot label.

    Returns ``(loss, grad_logits)`` where ``loss = -log pred[label]`` (floored at
    ``EPS`` inside the log) and ``grad_logits = pred - onehot(label)``.
    """
    p = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=np.int64)
    n = p.shape[-1]
    if np.any(label < 0) or np.any(label >= n):
        raise ValueError(f"label outside [0, {n})")
    picked = np.take_along_axis(p, label[..., None], axis=-1)[..., 0]
    loss = -np.log(np.maximum(picked, EPS))
    grad = p.copy()
    np.put_along_axis(grad, label[..., None], np.take_along_axis(grad, label[..., None], -1) - 1.0, -1)
    if loss.ndim == 0:
        loss = float(loss)
    return loss, grad


def kl_loss(pred, soft, reverse: bool = False):
    """KL divergence between a prediction and a soft target.

    By default computes ``KL(pred || soft)`` with the prediction as the first
    argument. ``reverse=True`` computes ``KL(soft || pred)`` instead. The soft
    target is treated as a constant. Returns ``(loss, grad_logits)``.
    """
    p = np.asarray(pred, dtype=float)
    q = np.asarray(soft, dtype=float)
    log_p = np.log(np.maximum(p, EPS))
    log_q = np.log(np.maximum(q, EPS))
    if reverse:
        loss = np.sum(q * (log_q - log_p), axis=-1)
        grad = p - q
    else:
        ratio = log_p - log_q
        loss = np.sum(p * ratio, axis=-1)
        grad = p * (ratio - loss[..., None])
    loss = np.maximum(loss, 0.0)
    if loss.ndim == 0:
        loss = float(loss)
    return loss, grad


def param_gradient(grad_logits, features):
    """Weight and bias gradients of a linear model from logit gradients.

    For a single example returns ``(outer(g, x), g)``; for a batch (leading
    axis) the per-example gradients are summed.
    """
    g = np.asarray(grad_logits, dtype=float)
    x = np.asarray(features, dtype=float)
    if g.ndim == 1:
        return np.outer(g, x), g.copy()
    return g.T @ x, g.sum(axis=0)


@dataclass
class AnnotatorModel:
    """Linear softmax classifier reproducing one annotator's labels."""

    annotator_id: int
    weights: np.ndarray
    bias: np.ndarray
    step_size: float = 0.1
    momentum: float = 0.0
    updates_applied: int = 0
    _velocity: tuple | None = field(default=None, repr=False)

    @classmethod
    def create(
        cls,
        annotator_id: int,
        num_classes: int,
        feature_dim: int,
        step_size: float = 0.1,
        momentum: float = 0.0,
        rng=None,
        init_scale: float = 0.01,
    ) -> "AnnotatorModel":
        if rng is None:
            weights = np.zeros((num_classes, feature_dim))
        else:
            weights = init_scale * rng.standard_normal((num_classes, feature_dim))
        return cls(annotator_id, weights, np.zeros(num_classes), step_size, momentum)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.feature_dim:
            raise ValueError(
                f"feature dimension {x.shape[-1]} does not match model dimension {self.feature_dim}"
            )
        return x @ self.weights.T + self.bias

    def predict(self, features) -> np.ndarray:
        return softmax(self.logits(features))

    def apply_update(self, gradient, scale: float = 1.0) -> "AnnotatorModel":
        """One SGD step, ``params -= step_size * scale * gradient``.

        ``gradient`` is a ``(grad_weights, grad_bias)`` pair. Parameters are
        updated in place so views onto a shared parameter block stay valid.
        """
        gw, gb = (np.asarray(g, dtype=float) for g in gradient)
        if gw.shape != self.weights.shape or gb.shape != self.bias.shape:
            raise ValueError("gradient shape does not match model parameters")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"non-finite gradient for annotator {self.annotator_id}")
        lr = self.step_size * scale
        if self.momentum:
            if self._velocity is None:
                self._velocity = (np.zeros_like(self.weights), np.zeros_like(self.bias))
            vw, vb = self._velocity
            vw *= self.momentum
            vw += gw
            vb *= self.momentum
            vb += gb
            gw, gb = vw, vb
        self.weights -= lr * gw
        self.bias -= lr * gb
        self.updates_applied += 1
        return self

    def to_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "N": self.num_classes,
            "d": self.feature_dim,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "updates_applied": self.updates_applied,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, doc: dict, step_size: float = 0.1) -> "AnnotatorModel":
        weights = np.asarray(doc["weights"], dtype=float).reshape(doc["N"], doc["d"])
        bias = np.asarray(doc["bias"], dtype=float).reshape(doc["N"])
        return cls(int(doc["annotator_id"]), weights, bias, step_size,
                   updates_applied=int(doc.get("updates_applied", 0)))

    @classmethod
    def load(cls, path, step_size: float = 0.1) -> "AnnotatorModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), step_size)


def predict_all(models, features) -> np.ndarray:
    """Stacked predictions, shape (num_samples, K, N)."""
    return np.stack([m.predict(features) for m in models], axis=-2)
