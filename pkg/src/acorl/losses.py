"""Task losses and the adversarial KL objective, all built on the tape."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractViolation, DomainError

Q_FLOOR = 1e-12


@dataclass(frozen=True)
class AamParams:
    margin: float = 0.2
    scale: float = 32.0

    def __post_init__(self):
        if not self.margin >= 0 or not self.scale > 0:
            raise ContractViolation(f"AAM needs margin >= 0 and scale > 0, got {self}")


def _labels(labels, batch: int, classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (batch,) or y.dtype.kind not in "iu":
        raise ContractViolation(f"labels must be {batch} integers, got shape {y.shape} dtype {y.dtype}")
    if (y < 0).any() or (y >= classes).any():
        raise ContractViolation(f"labels must lie in [0, {classes})")
    return y


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch mean of ``-log softmax(logits)[label]``."""
    if logits.data.ndim != 2:
        raise ContractViolation(f"logits must be a matrix, got {logits.shape}")
    y = _labels(labels, *logits.shape)
    return ad.neg(ad.mean(ad.pick(ad.log_softmax_rows(logits), y)))


def cosine_logits(embeddings: Tensor, class_weights: Tensor) -> Tensor:
    """Cosine similarity between every embedding and every class weight row."""
    if embeddings.data.ndim != 2 or class_weights.data.ndim != 2:
        raise ContractViolation("embeddings and class weights must be matrices")
    if embeddings.shape[1] != class_weights.shape[1]:
        raise ContractViolation(
            f"embedding dim {embeddings.shape[1]} != class weight dim {class_weights.shape[1]}"
        )
    e = ad.l2_normalize_rows(embeddings)
    w = ad.l2_normalize_rows(class_weights)
    return ad.matmul(e, ad.transpose(w))


def aam_softmax(embeddings: Tensor, class_weights: Tensor, labels, p: AamParams = AamParams()) -> Tensor:
    """Additive angular margin softmax.

    The target logit becomes ``s * cos(theta_y + m)``, the others ``s * cos(theta_j)``;
    the result is cross-entropy over those logits.
    """
    cos = cosine_logits(embeddings, class_weights)
    y = _labels(labels, *cos.shape)
    onehot = np.zeros(cos.shape)
    onehot[np.arange(cos.shape[0]), y] = 1.0
    # cos(theta + m) = cos*cos(m) - sin*sin(m), theta in [0, pi]
    sine = ad.sqrt(ad.clamp(Tensor(np.ones(cos.shape)) - cos * cos, lo=Q_FLOOR))
    shifted = cos * math.cos(p.margin) - sine * math.sin(p.margin)
    logits = cos + Tensor(onehot) * (shifted - cos)
    return cross_entropy(logits * p.scale, y)


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """Batch mean of ``sum_i p_i log(p_i / q_i)``, with ``0 log 0 = 0``.

    Entries of ``q`` are floored at 1e-12.
    """
    if p.shape != q.shape or p.data.ndim != 2:
        raise ContractViolation(f"kl_divergence: shapes {p.shape} and {q.shape} must be equal matrices")
    for name, t in (("p", p), ("q", q)):
        if (t.data < 0).any():
            raise DomainError(f"kl_divergence: negative entry in {name}")
        if np.abs(t.data.sum(axis=1) - 1.0).max() > 1e-9:
            raise ContractViolation(f"kl_divergence: rows of {name} must sum to 1")
    # p is floored too, which leaves p*log(p) at exactly 0 where p == 0
    log_ratio = ad.log(ad.clamp(p, lo=Q_FLOOR)) - ad.log(ad.clamp(q, lo=Q_FLOOR))
    return ad.scale(ad.sum(p * log_ratio), 1.0 / p.shape[0])


def adv_loss(z: Tensor, v, temperature: float = 1.0) -> Tensor:
    """KL(softmax(v/T) || softmax(z/T)); ``v`` is treated as a constant."""
    if not temperature > 0:
        raise ContractViolation(f"temperature must be positive, got {temperature}")
    v = Tensor(v.data if isinstance(v, Tensor) else v)
    if z.shape != v.shape:
        raise ContractViolation(f"adv_loss: projected shape {z.shape} != frozen representation {v.shape}")
    teacher = ad.softmax_rows(v * (1.0 / temperature))
    student = ad.softmax_rows(z * (1.0 / temperature))
    return kl_divergence(teacher, student)
