"""Plain training and alliance (ACoRL) training.

Alliance training descends

    total = L_t + (lam / K) * sum_k KL(softmax(v_k / T) || softmax(d_k(GRL(z')) / T))

where ``z'`` is the alliance representation, ``v_k`` the representation of
frozen model ``k`` and ``d_k`` a projection MLP. The gradient reversal layer
(factor 1) sits between ``z'`` and every projection, so a single descent step
moves the projections towards matching ``v_k`` while pushing the alliance
model away from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import load_checkpoint, params_hash
from .data import Dataset
from .errors import ContractViolation
from .losses import AamParams, aam_softmax, adv_loss, cross_entropy
from .metrics import top1_accuracy
from .nn import Model, ModelSpec, build_model, forward, make_optimizer, optimizer_step
from .rng import component_rng, derive_seed, permutation


@dataclass
class TrainOptions:
    epochs: int = 30
    batch_size: int = 64
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    seed: int = 0
    aam: AamParams = field(default_factory=AamParams)


@dataclass
class ProjectionSpec:
    """Projection MLP shape; ``hidden=None`` means max(alliance, frozen) repr dim."""

    hidden: int | None = None
    depth: int = 2


@dataclass
class AcorlConfig:
    lam: float = 1.0
    temperature: float = 1.0
    frozen: Sequence = ()  # checkpoint paths or Model objects
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    train: TrainOptions = field(default_factory=TrainOptions)

    def __post_init__(self):
        if not self.lam >= 0:
            raise ContractViolation(f"lambda must be >= 0, got {self.lam}")
        if not self.temperature > 0:
            raise ContractViolation(f"temperature must be > 0, got {self.temperature}")


@dataclass
class TrainResult:
    model: Model
    metrics: list[dict]
    projections: list[Model] = field(default_factory=list)


@dataclass
class CombinedLoss:
    total: Tensor
    task: float
    adv: list[float]


def task_loss(spec: ModelSpec, params, out, labels, aam: AamParams) -> Tensor:
    if spec.head == "classifier":
        return cross_entropy(out.task_out, labels)
    return aam_softmax(out.representation, params["head.weight"], labels, aam)


def projection_spec(alliance: ModelSpec, frozen: ModelSpec, proj: ProjectionSpec) -> ModelSpec:
    if proj.depth < 1:
        raise ContractViolation("projection depth must be >= 1")
    hidden = proj.hidden or max(alliance.repr_dim, frozen.repr_dim)
    return ModelSpec(
        input_dim=alliance.repr_dim,
        hidden_dims=(hidden,) * (proj.depth - 1),
        head="classifier",
        num_classes=frozen.repr_dim,
    )


def combined_loss(
    x,
    labels,
    spec: ModelSpec,
    params: dict,
    projections: Sequence[tuple[ModelSpec, dict]],
    frozen: Sequence[Model],
    cfg: AcorlConfig,
) -> CombinedLoss:
    """Alliance objective for one batch; ``params`` and projection params may be tracked."""
    out = forward(spec, params, x)
    l_t = task_loss(spec, params, out, labels, cfg.train.aam)
    if not frozen:
        return CombinedLoss(l_t, l_t.item(), [])
    if len(projections) != len(frozen):
        raise ContractViolation("need exactly one projection per frozen model")
    z = ad.grad_reverse(out.representation, 1.0) if out.representation.tracked else out.representation
    advs = []
    for (pspec, pparams), m in zip(projections, frozen):
        v = m.forward(x).representation
        z_k = forward(pspec, pparams, z).task_out
        if z_k.shape != v.shape:
            raise ContractViolation(f"projection output {z_k.shape} != frozen representation {v.shape}")
        advs.append(adv_loss(z_k, v, cfg.temperature))
    adv_sum = advs[0]
    for a in advs[1:]:
        adv_sum = adv_sum + a
    total = l_t + ad.scale(adv_sum, cfg.lam / len(frozen))
    return CombinedLoss(total, l_t.item(), [a.item() for a in advs])


def _check_dataset(spec: ModelSpec, data: Dataset):
    if len(data) == 0:
        raise ContractViolation("training dataset is empty")
    if data.input_dim != spec.input_dim:
        raise ContractViolation(f"dataset has {data.input_dim} features, model expects {spec.input_dim}")
    if data.labels.min() < 0 or data.labels.max() >= spec.num_classes:
        raise ContractViolation(f"labels must lie in [0, {spec.num_classes})")


def evaluate_model(model: Model, data: Dataset) -> float:
    """Top-1 accuracy; embedding models classify by cosine to their class weights."""
    out = model.forward(data.features)
    if model.spec.head == "classifier":
        return top1_accuracy(out.task_out.data, data.labels)
    w = model.params["head.weight"]
    w = w / np.maximum(np.linalg.norm(w, axis=1, keepdims=True), 1e-12)
    return top1_accuracy(out.task_out.data @ w.T, data.labels)


def _load_frozen(frozen) -> list[Model]:
    return [load_checkpoint(f) if not isinstance(f, Model) else f for f in frozen]


def _fit(
    spec: ModelSpec,
    data: Dataset,
    cfg: AcorlConfig,
    frozen: list[Model],
    eval_data: Dataset | None,
    on_epoch: Callable[[int, Model], None] | None,
) -> TrainResult:
    opts = cfg.train
    _check_dataset(spec, data)
    if opts.batch_size < 1 or opts.epochs < 0:
        raise ContractViolation("batch_size must be >= 1 and epochs >= 0")
    for k, m in enumerate(frozen):
        if m.spec.input_dim != data.input_dim:
            raise ContractViolation(
                f"frozen model {k} expects {m.spec.input_dim} features, dataset has {data.input_dim}"
            )
    model = build_model(spec, derive_seed(opts.seed, "init"))
    params = dict(model.params)
    prefixes = []
    for k, m in enumerate(frozen):
        pspec = projection_spec(spec, m.spec, cfg.projection)
        proj = build_model(pspec, derive_seed(opts.seed, f"projection.{k}"))
        prefixes.append((f"proj.{k}.", pspec))
        params.update({f"proj.{k}.{n}": v for n, v in proj.params.items()})
    before = [params_hash(m.params) for m in frozen]

    opt = make_optimizer(**opts.optimizer)
    batch_rng = component_rng(opts.seed, "batches")
    n = len(data)
    metrics = []
    for epoch in range(1, opts.epochs + 1):
        order = permutation(batch_rng, n)
        task_sum, adv_sum, batches = 0.0, np.zeros(len(frozen)), 0
        for start in range(0, n, opts.batch_size):
            idx = order[start:start + opts.batch_size]
            tape = Tape()
            tracked = {name: tape.parameter(v) for name, v in params.items()}
            own = {name: t for name, t in tracked.items() if not name.startswith("proj.")}
            projs = [
                (pspec, {name[len(pre):]: t for name, t in tracked.items() if name.startswith(pre)})
                for pre, pspec in prefixes
            ]
            loss = combined_loss(data.features[idx], data.labels[idx], spec, own, projs, frozen, cfg)
            grads = tape.backward(loss.total)
            params, opt = optimizer_step(params, {name: grads[t] for name, t in tracked.items()}, opt)
            task_sum += loss.task
            adv_sum += loss.adv
            batches += 1
        current = Model(spec, {k: v for k, v in params.items() if not k.startswith("proj.")})
        record = {"epoch": epoch, "L_t": task_sum / batches, "L_adv_mean": float(adv_sum.mean() / batches) if frozen else None}
        record["eval_metric"] = evaluate_model(current, eval_data) if eval_data is not None else None
        metrics.append(record)
        if on_epoch is not None:
            on_epoch(epoch, current)

    if [params_hash(m.params) for m in frozen] != before:
        raise ContractViolation("a frozen model was modified during training")
    final = Model(spec, {k: v for k, v in params.items() if not k.startswith("proj.")})
    projections = [
        Model(pspec, {name[len(pre):]: v for name, v in params.items() if name.startswith(pre)})
        for pre, pspec in prefixes
    ]
    return TrainResult(final, metrics, projections)


def train_plain(
    spec: ModelSpec,
    data: Dataset,
    opts: TrainOptions | None = None,
    eval_data: Dataset | None = None,
    on_epoch: Callable[[int, Model], None] | None = None,
) -> TrainResult:
    """Minimise the task loss alone by minibatch gradient descent."""
    cfg = AcorlConfig(lam=0.0, train=opts or TrainOptions())
    return _fit(spec, data, cfg, [], eval_data, on_epoch)


def train_alliance(
    spec: ModelSpec,
    data: Dataset,
    cfg: AcorlConfig,
    eval_data: Dataset | None = None,
    on_epoch: Callable[[int, Model], None] | None = None,
) -> TrainResult:
    """Train an alliance model against the frozen models in ``cfg.frozen``.

    Initialization and batch order depend only on ``cfg.train.seed``, so with
    ``lam=0`` the trajectory matches :func:`train_plain` bit for bit.
    """
    return _fit(spec, data, cfg, _load_frozen(cfg.frozen), eval_data, on_epoch)
