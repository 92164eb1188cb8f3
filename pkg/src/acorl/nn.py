"""MLP models, Glorot initialization and first-order optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ContractViolation
from .rng import make_rng, uniform

HEADS = ("classifier", "embedding")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of an MLP with a representation tap and a task head.

    The representation is the activation output of the last hidden layer (the
    raw input when ``hidden_dims`` is empty). A classifier head adds an affine
    map to ``num_classes`` logits. An embedding head scores by cosine; its
    ``num_classes`` sizes the class-weight matrix used by AAM-softmax.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = ()
    head: str = "classifier"
    num_classes: int = 2
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ContractViolation(f"layer widths must be positive: {self}")
        if self.head not in HEADS:
            raise ContractViolation(f"head must be one of {HEADS}, got {self.head!r}")
        if self.num_classes < 1:
            raise ContractViolation("num_classes must be positive")
        if self.activation != "relu":
            raise ContractViolation(f"unsupported activation {self.activation!r}")

    @property
    def repr_dim(self) -> int:
        return self.hidden_dims[-1] if self.hidden_dims else self.input_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        width = self.input_dim
        for i, h in enumerate(self.hidden_dims):
            shapes[f"hidden.{i}.weight"] = (width, h)
            shapes[f"hidden.{i}.bias"] = (h,)
            width = h
        if self.head == "classifier":
            shapes["head.weight"] = (width, self.num_classes)
            shapes["head.bias"] = (self.num_classes,)
        else:
            shapes["head.weight"] = (self.num_classes, width)
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(**{**d, "hidden_dims": tuple(d.get("hidden_dims", ()))})


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, np.ndarray]

    def track(self, tape: Tape) -> dict[str, Tensor]:
        return {k: tape.parameter(v) for k, v in self.params.items()}

    def forward(self, batch) -> "Output":
        return forward(self.spec, self.params, batch)

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()})


@dataclass
class Output:
    representation: Tensor
    task_out: Tensor


def glorot_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return uniform(rng, (fan_in, fan_out), -limit, limit)


def build_model(spec: ModelSpec, seed: int) -> Model:
    """Glorot-uniform weights, zero biases; weights drawn in parameter order."""
    rng = make_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        elif name == "head.weight" and spec.head == "embedding":
            params[name] = glorot_uniform(rng, shape[1], shape[0]).T.copy()
        else:
            params[name] = glorot_uniform(rng, *shape)
    return Model(spec, params)


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def forward(spec: ModelSpec, params: Mapping, batch) -> Output:
    """Run the MLP. ``params`` may hold tracked tensors or plain arrays."""
    x = _t(batch)
    if x.data.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ContractViolation(f"batch shape {x.shape} does not match input_dim={spec.input_dim}")
    h = x
    for i in range(len(spec.hidden_dims)):
        h = ad.broadcast_add_row(ad.matmul(h, _t(params[f"hidden.{i}.weight"])), _t(params[f"hidden.{i}.bias"]))
        h = ad.relu(h)
    if spec.head == "classifier":
        out = ad.broadcast_add_row(ad.matmul(h, _t(params["head.weight"])), _t(params["head.bias"]))
    else:
        out = ad.l2_normalize_rows(h)
    return Output(h, out)


# --------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    """``kind`` is ``sgd_momentum`` or ``adam``; ``hparams`` holds its settings."""

    kind: str = "adam"
    hparams: dict = field(default_factory=lambda: {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8})
    accumulators: dict = field(default_factory=dict)
    step: int = 0


def make_optimizer(kind: str = "adam", **hparams) -> OptimizerState:
    if kind == "adam":
        hp = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
    elif kind == "sgd_momentum":
        hp = {"lr": 1e-2, "momentum": 0.9}
    else:
        raise ContractViolation(f"unknown optimizer {kind!r}")
    unknown = set(hparams) - set(hp)
    if unknown:
        raise ContractViolation(f"unknown {kind} settings: {sorted(unknown)}")
    hp.update({k: float(v) for k, v in hparams.items()})
    return OptimizerState(kind, hp)


def optimizer_step(params: dict, grads: Mapping, state: OptimizerState) -> tuple[dict, OptimizerState]:
    """Apply one update; returns fresh parameter arrays and the (mutated) state."""
    missing = set(params) - set(grads)
    if missing:
        raise ContractViolation(f"no gradient for {sorted(missing)}")
    state.step += 1
    hp = state.hparams
    new = {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != theta.shape:
            raise ContractViolation(f"{name}: gradient shape {g.shape} != parameter shape {theta.shape}")
        if state.kind == "sgd_momentum":
            v = hp["momentum"] * state.accumulators.get(name, 0.0) + g
            state.accumulators[name] = v
            new[name] = theta - hp["lr"] * v
        elif state.kind == "adam":
            m, v = state.accumulators.get(name, (0.0, 0.0))
            m = hp["beta1"] * m + (1 - hp["beta1"]) * g
            v = hp["beta2"] * v + (1 - hp["beta2"]) * g * g
            state.accumulators[name] = (m, v)
            m_hat = m / (1 - hp["beta1"] ** state.step)
            v_hat = v / (1 - hp["beta2"] ** state.step)
            new[name] = theta - hp["lr"] * m_hat / (np.sqrt(v_hat) + hp["eps"])
        else:
            raise ContractViolation(f"unknown optimizer {state.kind!r}")
    return new, state
