"""End-to-end runs of the canonical complementary-cue experiment.

One call trains model A, an independently trained B and an alliance B (same
seed as plain B, trained against frozen A), then fuses and scores them. The
classification track mirrors the accuracy table (late and weighted output
fusion, attribution overlap); the verification track trains AAM-softmax
embeddings and fuses cosine scores with logistic regression.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import ComplementaryCueSpec, Dataset, gen_complementary_classes, gen_trial_list, split_indices
from .fusion import (
    fit_logreg,
    fit_output_weights,
    member_trial_scores,
    output_fuse_logreg,
    output_fuse_weighted,
    train_late_fusion,
)
from .losses import AamParams
from .metrics import (
    class_logit,
    complementarity_score,
    cosine_scores,
    eer,
    integrated_gradients,
    linear_cka,
    top1_accuracy,
)
from .nn import Model, ModelSpec
from .rng import derive_seed
from .training import AcorlConfig, TrainOptions, evaluate_model, train_alliance, train_plain


@dataclass
class Settings:
    dataset: ComplementaryCueSpec = field(default_factory=ComplementaryCueSpec)
    hidden_a: tuple[int, ...] = (64, 32)
    hidden_b: tuple[int, ...] = (48, 32)
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    lam: float = 1.0
    temperature: float = 1.0
    fusion_epochs: int = 20
    fusion_hidden: int = 512
    fusion_layers: int = 2
    attribution_samples: int = 100
    attribution_steps: int = 64
    genuine_per_class: int = 100
    impostor_total: int = 2000
    aam: AamParams = field(default_factory=AamParams)


def prepare_data(seed: int, settings: Settings) -> dict[str, Dataset]:
    spec = replace(settings.dataset, seed=derive_seed(seed, "data"))
    data, report = gen_complementary_classes(spec)
    split = split_indices(len(data), derive_seed(seed, "split"))
    out = {name: data.subset(idx) for name, idx in split.items()}
    out["full"] = data
    out["split"] = split
    out["report"] = report
    return out


def trial_lists(labels, split, genuine_per_class: int, impostor_total: int, seed: int) -> dict:
    """Eval trials at full size and calibration trials at half size, drawn within each split."""
    return {
        part: gen_trial_list(
            labels,
            max(genuine_per_class // (2 if part == "calib" else 1), 1),
            max(impostor_total // (2 if part == "calib" else 1), 1),
            derive_seed(seed, f"trials.{part}"),
            subset=split[part],
        )
        for part in ("eval", "calib")
    }


def _opts(settings: Settings, seed: int) -> TrainOptions:
    return TrainOptions(
        epochs=settings.epochs,
        batch_size=settings.batch_size,
        optimizer={"kind": "adam", "lr": settings.lr},
        seed=seed,
        aam=settings.aam,
    )


def train_members(seed: int, settings: Settings, train: Dataset, head: str) -> dict[str, Model]:
    """Model A, plain B and alliance B (which shares plain B's seed)."""
    C = settings.dataset.num_classes
    d = train.input_dim
    spec_a = ModelSpec(d, settings.hidden_a, head, C)
    spec_b = ModelSpec(d, settings.hidden_b, head, C)
    a = train_plain(spec_a, train, _opts(settings, derive_seed(seed, f"{head}.A"))).model
    seed_b = derive_seed(seed, f"{head}.B")
    b_plain = train_plain(spec_b, train, _opts(settings, seed_b)).model
    cfg = AcorlConfig(lam=settings.lam, temperature=settings.temperature, frozen=[a], train=_opts(settings, seed_b))
    b_acorl = train_alliance(spec_b, train, cfg).model
    return {"A": a, "B_plain": b_plain, "B_acorl": b_acorl}


def _late(members, settings: Settings, train: Dataset, seed: int):
    opts = replace(_opts(settings, seed), epochs=settings.fusion_epochs)
    return train_late_fusion(members, train, opts, settings.fusion_hidden, settings.fusion_layers)


def attribution_set(model: Model, samples: Dataset, baseline, steps: int, model_id: str, ids):
    return [
        integrated_gradients(model, class_logit(int(y)), x, baseline, steps, model_id, int(i))
        for i, x, y in zip(ids, samples.features, samples.labels)
    ]


def run_classification(seed: int, settings: Settings | None = None) -> dict:
    settings = settings or Settings()
    data = prepare_data(seed, settings)
    train, ev, calib = data["train"], data["eval"], data["calib"]
    m = train_members(seed, settings, train, "classifier")
    a, bp, ba = m["A"], m["B_plain"], m["B_acorl"]

    out = {"seed": seed, "oracle": data["report"].group_oracle_accuracy}
    for name, model in m.items():
        out[f"acc.{name}"] = evaluate_model(model, ev)

    fs = derive_seed(seed, "fusion")
    for name, members in {"A": [a], "A+A": [a, a], "A+B_plain": [a, bp], "A+B_acorl": [a, ba]}.items():
        bundle = _late(members, settings, train, fs)
        out[f"lf.{name}"] = top1_accuracy(bundle.predict(ev.features), ev.labels)

    for name, members in {"A+B_plain": [a, bp], "A+B_acorl": [a, ba]}.items():
        w = fit_output_weights(np.stack([mm.forward(calib.features).task_out.data for mm in members]), calib.labels)
        fused = output_fuse_weighted(np.stack([mm.forward(ev.features).task_out.data for mm in members]), w)
        out[f"of.{name}"] = top1_accuracy(fused, ev.labels)
        out[f"of.{name}.weights"] = w.tolist()

    k = min(settings.attribution_samples, len(ev))
    ids = data["split"]["eval"][:k]
    samples = ev.subset(np.arange(k))
    baseline = train.features.mean(axis=0)
    maps = {
        name: attribution_set(model, samples, baseline, settings.attribution_steps, name, ids)
        for name, model in m.items()
    }
    out["comp.A~B_plain"], _ = complementarity_score(maps["A"], maps["B_plain"])
    out["comp.A~B_acorl"], _ = complementarity_score(maps["A"], maps["B_acorl"])
    reps = {name: model.forward(ev.features).representation.data for name, model in m.items()}
    out["cka.A~B_plain"] = linear_cka(reps["A"], reps["B_plain"])
    out["cka.A~B_acorl"] = linear_cka(reps["A"], reps["B_acorl"])
    out["maps"] = maps
    out["models"] = m
    return out


def run_verification(seed: int, settings: Settings | None = None) -> dict:
    settings = settings or Settings()
    data = prepare_data(seed, settings)
    full, split = data["full"], data["split"]
    m = train_members(seed, settings, data["train"], "embedding")
    trials = trial_lists(full.labels, split, settings.genuine_per_class, settings.impostor_total, seed)
    out = {"seed": seed}
    emb = {name: model.forward(full.features).task_out.data for name, model in m.items()}
    ev = trials["eval"]
    for name in m:
        out[f"eer.{name}"] = eer(cosine_scores(emb[name], ev.enroll, ev.test), ev.genuine)[0]
    for name, members in {"A+B_plain": [m["A"], m["B_plain"]], "A+B_acorl": [m["A"], m["B_acorl"]]}.items():
        cal = trials["calib"]
        beta, b0 = fit_logreg(member_trial_scores(members, full.features, cal.enroll, cal.test), cal.genuine)
        fused = output_fuse_logreg(member_trial_scores(members, full.features, ev.enroll, ev.test), beta, b0)
        out[f"of.{name}"] = eer(fused, ev.genuine)[0]
        out[f"of.{name}.beta"] = beta.tolist()
    out["models"] = m
    return out
