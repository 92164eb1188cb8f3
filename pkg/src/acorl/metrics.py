"""Accuracy, equal error rate, integrated gradients and attribution overlap."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ContractViolation
from .nn import forward


def top1_accuracy(logits, labels) -> float:
    """Fraction of rows whose argmax is the label; ties go to the smallest index."""
    logits = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] < 1 or labels.shape != (logits.shape[0],):
        raise ContractViolation(f"need B x C logits with B labels, got {logits.shape} and {labels.shape}")
    return float((np.argmax(logits, axis=1) == labels).mean())


def eer(scores, labels) -> tuple[float, float]:
    """Equal error rate and its threshold.

    ``labels`` are 1 for genuine and 0 for impostor trials. Candidate
    thresholds are the unique scores and the midpoints between neighbours;
    FAR(t) counts impostors scoring >= t and FRR(t) genuine trials scoring
    < t. The threshold minimising |FAR - FRR| wins (lowest on ties) and the
    EER is the mean of the two rates there.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractViolation("scores and labels must be equal-length vectors")
    gen = np.sort(scores[labels])
    imp = np.sort(scores[~labels])
    if len(gen) == 0 or len(imp) == 0:
        raise ContractViolation("EER needs both genuine and impostor scores")
    uniq = np.unique(scores)
    cands = np.sort(np.concatenate([uniq, (uniq[:-1] + uniq[1:]) / 2]))
    far = (len(imp) - np.searchsorted(imp, cands, side="left")) / len(imp)
    frr = np.searchsorted(gen, cands, side="left") / len(gen)
    i = int(np.argmin(np.abs(far - frr)))
    return float((far[i] + frr[i]) / 2), float(cands[i])


def cosine_scores(embeddings: np.ndarray, enroll, test) -> np.ndarray:
    e = np.asarray(embeddings, dtype=np.float64)
    e = e / np.maximum(np.linalg.norm(e, axis=1, keepdims=True), 1e-12)
    return np.einsum("ij,ij->i", e[np.asarray(enroll)], e[np.asarray(test)])


# --------------------------------------------------------------------------
# integrated gradients


@dataclass
class AttributionMap:
    values: np.ndarray
    model_id: str
    sample_id: int
    baseline_id: str
    steps: int
    completeness_gap: float
    delta: float  # f(x) - f(baseline)


Selector = Callable[["object"], Tensor]


def class_logit(classes) -> Selector:
    """Select the logit of ``classes`` (an int, or one per path point)."""

    def select(out):
        idx = np.broadcast_to(np.asarray(classes, dtype=np.int64), (out.task_out.shape[0],))
        return ad.pick(out.task_out, idx)

    return select


def cosine_to(reference) -> Selector:
    """Cosine score of an embedding head against a fixed reference embedding."""
    ref = np.asarray(reference, dtype=np.float64).reshape(-1)
    ref = ref / max(np.linalg.norm(ref), 1e-12)

    def select(out):
        col = Tensor(ref.reshape(-1, 1))
        return ad.matmul(out.task_out, col)

    return select


def integrated_gradients(
    model,
    selector: Selector,
    x,
    baseline,
    steps: int = 64,
    model_id: str = "model",
    sample_id: int = 0,
    baseline_id: str = "mean",
) -> AttributionMap:
    """Right-endpoint Riemann approximation of the path integral from ``baseline`` to ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x0 = np.asarray(baseline, dtype=np.float64).reshape(-1)
    if x.shape != x0.shape:
        raise ContractViolation(f"baseline shape {x0.shape} does not match input {x.shape}")
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    alphas = np.arange(1, steps + 1, dtype=np.float64)[:, None] / steps
    tape = Tape()
    path = tape.parameter(x0 + alphas * (x - x0))
    out = ad.sum(selector(forward(model.spec, model.params, path)))
    grads = tape.backward(out)[path]
    ig = (x - x0) * grads.mean(axis=0)
    ends = selector(forward(model.spec, model.params, np.stack([x, x0]))).data.reshape(-1)
    delta = float(ends[0] - ends[1])
    return AttributionMap(ig, model_id, sample_id, baseline_id, steps, abs(float(ig.sum()) - delta), delta)


def complementarity_score(a: Sequence[AttributionMap], b: Sequence[AttributionMap]) -> tuple[float, int]:
    """Mean cosine similarity of |attribution| vectors over shared samples.

    Returns ``(score, skipped)`` where ``skipped`` counts samples with an
    all-zero map on either side. Lower scores mean more complementary models.
    """
    if len(a) != len(b):
        raise ContractViolation("attribution sets must cover the same samples")
    sims, skipped = [], 0
    for ma, mb in zip(a, b):
        if ma.sample_id != mb.sample_id or ma.baseline_id != mb.baseline_id:
            raise ContractViolation("attribution sets must share samples and baselines, in order")
        u, v = np.abs(ma.values), np.abs(mb.values)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            skipped += 1
            continue
        sims.append(float(u @ v / (nu * nv)))
    if not sims:
        raise ContractViolation("every sample had an all-zero attribution")
    return float(np.mean(sims)), skipped


def linear_cka(x, y) -> float:
    """Linear centered kernel alignment between two representation matrices (rows = samples).

    1 for representations equal up to rotation and isotropic scaling, near 0
    for unrelated ones. Reported next to the attribution overlap as a second,
    attribution-free similarity proxy.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ContractViolation(f"need two N x d matrices with equal N, got {x.shape} and {y.shape}")
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    cross = np.linalg.norm(y.T @ x) ** 2
    norm = np.linalg.norm(x.T @ x) * np.linalg.norm(y.T @ y)
    return float(cross / norm) if norm > 0 else 0.0


def write_attributions(path, maps: Sequence[AttributionMap]):
    if not maps:
        raise ContractViolation("nothing to write")
    d = len(maps[0].values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "model_id"] + [f"feature_{i}" for i in range(d)] + ["completeness_gap"])
        for m in maps:
            w.writerow([m.sample_id, m.model_id] + [f"{v:.17g}" for v in m.values] + [f"{m.completeness_gap:.17g}"])


def read_attributions(path) -> list[AttributionMap]:
    out = []
    with Path(path).open(newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for row in rows:
            vals = np.array([float(v) for v in row[2:-1]])
            out.append(AttributionMap(vals, row[1], int(row[0]), "", 0, float(row[-1]), float("nan")))
    return out
