"""Late fusion over concatenated representations and output-level fusion."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import file_sha256, load_checkpoint, params_hash, read_container, write_container
from .data import Dataset
from .errors import ConfigurationError, ContractViolation, IntegrityError
from .metrics import cosine_scores
from .nn import Model, ModelSpec
from .training import TrainOptions, TrainResult, train_plain
from .rng import derive_seed

MODES = ("late", "output_weighted", "output_logreg")
MAX_LATE_INPUT = 4096


@dataclass
class FusionBundle:
    mode: str
    members: list[Model]
    head: Model | None = None  # late
    weights: np.ndarray | None = None  # output_weighted
    beta: np.ndarray | None = None  # output_logreg
    intercept: float = 0.0
    member_ids: list[str] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolation(f"fusion mode must be one of {MODES}")

    def representations(self, features) -> np.ndarray:
        return np.concatenate([m.forward(features).representation.data for m in self.members], axis=1)

    def predict(self, features) -> np.ndarray:
        """Late: head output (logits or unit embeddings). Weighted: fused probabilities."""
        if self.mode == "late":
            return self.head.forward(self.representations(features)).task_out.data
        if self.mode == "output_weighted":
            logits = np.stack([m.forward(features).task_out.data for m in self.members])
            return output_fuse_weighted(logits, self.weights)
        raise ContractViolation("logistic-regression fusion scores trials, use score_trials()")

    def score_trials(self, features, enroll, test) -> np.ndarray:
        if self.mode == "output_logreg":
            s = member_trial_scores(self.members, features, enroll, test)
            return output_fuse_logreg(s, self.beta, self.intercept)
        return cosine_scores(self.predict(features), enroll, test)


# --------------------------------------------------------------------------
# late fusion


def train_late_fusion(
    members: Sequence[Model],
    data: Dataset,
    opts: TrainOptions | None = None,
    hidden: int = 512,
    hidden_layers: int = 2,
    eval_data: Dataset | None = None,
    max_input_dim: int = MAX_LATE_INPUT,
) -> FusionBundle:
    """Train an MLP head on the concatenated (frozen) member representations.

    The default reads "3-layer MLP with 512 hidden nodes" as
    input -> 512 -> 512 -> output; ``hidden_layers=1`` gives the other reading.
    """
    members = list(members)
    if not members:
        raise ContractViolation("late fusion needs at least one member")
    heads = {m.spec.head for m in members}
    if len(heads) != 1:
        raise ContractViolation("members must share a head kind")
    width = sum(m.spec.repr_dim for m in members)
    if width > max_input_dim:
        raise ConfigurationError(f"concatenated representation width {width} exceeds {max_input_dim}")
    opts = opts or TrainOptions()
    before = [params_hash(m.params) for m in members]
    bundle = FusionBundle("late", members)
    reps = Dataset(bundle.representations(data.features), data.labels)
    reps_eval = Dataset(bundle.representations(eval_data.features), eval_data.labels) if eval_data else None
    spec = ModelSpec(
        input_dim=width,
        hidden_dims=(hidden,) * hidden_layers,
        head=heads.pop(),
        num_classes=max(m.spec.num_classes for m in members),
    )
    result: TrainResult = train_plain(spec, reps, replace(opts, seed=derive_seed(opts.seed, "late_fusion")), reps_eval)
    if [params_hash(m.params) for m in members] != before:
        raise ContractViolation("late fusion modified a member model")
    bundle.head = result.model
    bundle.metrics = result.metrics
    return bundle


# --------------------------------------------------------------------------
# output fusion, classification


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def output_fuse_weighted(member_logits, w) -> np.ndarray:
    """Convex combination of member softmax probabilities."""
    logits = np.asarray(member_logits, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if logits.ndim != 3 or w.shape != (logits.shape[0],):
        raise ContractViolation(f"need M x B x C logits and M weights, got {logits.shape} and {w.shape}")
    if (w < -1e-9).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ContractViolation(f"weights must lie on the simplex, got {w.tolist()}")
    return np.tensordot(w, _softmax(logits), axes=1)


def simplex_grid(m: int, resolution: float = 0.05) -> np.ndarray:
    """All weight vectors with entries in multiples of ``resolution`` summing to 1, lexicographic."""
    steps = int(round(1.0 / resolution))
    if not np.isclose(steps * resolution, 1.0):
        raise ConfigurationError("resolution must divide 1")
    rows = [c for c in itertools.product(range(steps + 1), repeat=m - 1) if sum(c) <= steps]
    grid = np.array([list(c) + [steps - sum(c)] for c in rows], dtype=np.float64)
    return grid / steps


def fit_output_weights(member_logits, labels, resolution: float = 0.05) -> np.ndarray:
    """Grid-search simplex weights for best top-1 accuracy; ties go to the most uniform."""
    logits = np.asarray(member_logits, dtype=np.float64)
    labels = np.asarray(labels)
    probs = _softmax(logits)
    grid = simplex_grid(logits.shape[0], resolution)
    uniform = np.full(logits.shape[0], 1.0 / logits.shape[0])
    best, best_key = None, None
    for w in grid:
        acc = float((np.argmax(np.tensordot(w, probs, axes=1), axis=1) == labels).mean())
        key = (-acc, float(np.sum((w - uniform) ** 2)))
        if best_key is None or key < best_key:
            best, best_key = w, key
    return best


# --------------------------------------------------------------------------
# output fusion, verification


def member_trial_scores(members: Sequence[Model], features, enroll, test) -> np.ndarray:
    """N x M matrix of per-member cosine scores."""
    cols = [cosine_scores(m.forward(features).task_out.data, enroll, test) for m in members]
    return np.stack(cols, axis=1)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def fit_logreg(scores, labels, tol: float = 1e-8, max_iter: int = 200_000) -> tuple[np.ndarray, float]:
    """Full-batch gradient descent on mean binary cross-entropy.

    Step size is 1/L with L = max eigenvalue of X^T X / (4N) for X = [scores, 1].
    Stops once the gradient norm drops below ``tol`` (or after ``max_iter``
    steps, which is where perfectly separable data ends up).
    """
    X = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ContractViolation("scores must be N x M with N labels")
    if len(np.unique(y)) < 2:
        raise ConfigurationError("calibration trials contain a single class")
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    n = Xa.shape[0]
    step = 1.0 / (np.linalg.eigvalsh(Xa.T @ Xa).max() / (4.0 * n))
    theta = np.zeros(Xa.shape[1])
    for _ in range(max_iter):
        grad = Xa.T @ (_sigmoid(Xa @ theta) - y) / n
        if np.linalg.norm(grad) < tol:
            break
        theta = theta - step * grad
    return theta[:-1], float(theta[-1])


def output_fuse_logreg(member_scores, beta, intercept: float) -> np.ndarray:
    s = np.asarray(member_scores, dtype=np.float64)
    return _sigmoid(s @ np.asarray(beta, dtype=np.float64) + intercept)


# --------------------------------------------------------------------------
# persistence


def save_fusion(path, bundle: FusionBundle, member_paths: Sequence):
    """Write the bundle in the checkpoint container; members are referenced by path and hash."""
    path = Path(path)
    members = []
    for p in member_paths:
        p = Path(p)
        try:
            rel = str(p.resolve().relative_to(path.resolve().parent))
        except ValueError:
            rel = str(p.resolve())
        members.append({"path": rel, "sha256": file_sha256(p)})
    manifest = {"kind": "fusion", "mode": bundle.mode, "members": members}
    arrays = {}
    if bundle.mode == "late":
        manifest["head_spec"] = bundle.head.spec.to_dict()
        arrays = bundle.head.params
    elif bundle.mode == "output_weighted":
        manifest["weights"] = [float(v) for v in bundle.weights]
    else:
        manifest["beta"] = [float(v) for v in bundle.beta]
        manifest["intercept"] = float(bundle.intercept)
    write_container(path, manifest, arrays)


def load_fusion(path) -> FusionBundle:
    path = Path(path)
    manifest, arrays = read_container(path)
    if manifest.get("kind") != "fusion":
        raise IntegrityError(f"{path}: expected a fusion bundle, found kind={manifest.get('kind')!r}")
    members, ids = [], []
    for entry in manifest["members"]:
        p = Path(entry["path"])
        p = p if p.is_absolute() else path.parent / p
        if not p.exists():
            raise IntegrityError(f"{path}: member checkpoint {p} is missing")
        if file_sha256(p) != entry["sha256"]:
            raise IntegrityError(f"{path}: member checkpoint {p} changed since fusion")
        members.append(load_checkpoint(p))
        ids.append(str(p))
    mode = manifest["mode"]
    bundle = FusionBundle(mode, members, member_ids=ids)
    if mode == "late":
        bundle.head = Model(ModelSpec.from_dict(manifest["head_spec"]), arrays)
    elif mode == "output_weighted":
        bundle.weights = np.array(manifest["weights"])
    else:
        bundle.beta = np.array(manifest["beta"])
        bundle.intercept = manifest["intercept"]
    return bundle
