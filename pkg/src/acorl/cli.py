"""``acorl`` command-line entry point.

Every subcommand reads a YAML config (``--config``), takes optional
``--seed`` and ``--out`` overrides and writes artifacts under the output
directory::

    data/          dataset.csv, split.json, trials_eval.txt, trials_calib.txt
    checkpoints/   <name>.ckpt + <name>.json sidecar, <name>/epoch_NNN.ckpt snapshots
    metrics/       <name>.jsonl training curves, eval_<name>.json, complementarity.json
    attributions/  <model>.csv
    report.txt, report.json

Several ``--seed`` values give one ``seed_<n>/`` directory per seed; ``--jobs``
runs those seeds in parallel worker processes. Logs are JSON lines on
stderr and the command result is one JSON object on stdout.

Exit codes: 0 success, 2 configuration error, 3 data or integrity error,
4 contract violation (including a failed gradcheck).
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gradcheck, report
from .checkpoint import load_checkpoint, read_container, save_checkpoint
from .config import ExperimentConfig, load_config
from .data import (
    gen_complementary_classes,
    read_dataset,
    split_indices,
    write_dataset,
    write_trials,
)
from .errors import AcorlError, ConfigurationError, ContractViolation, DataError
from .experiment import trial_lists
from .fusion import (
    FusionBundle,
    fit_logreg,
    fit_output_weights,
    load_fusion,
    member_trial_scores,
    save_fusion,
    train_late_fusion,
)
from .metrics import (
    class_logit,
    complementarity_score,
    cosine_scores,
    cosine_to,
    eer,
    integrated_gradients,
    top1_accuracy,
    write_attributions,
)
from .rng import derive_seed
from .training import AcorlConfig, evaluate_model, train_alliance, train_plain

COMMANDS = ("gen-data", "train", "train-acorl", "fuse-late", "fuse-output", "eval", "attribute", "gradcheck", "report")

log = logging.getLogger("acorl")


class JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {"ts": round(record.created, 3), "level": record.levelname.lower(), "event": record.getMessage()}
        out.update(getattr(record, "fields", {}))
        return json.dumps(out, sort_keys=True, default=str)


def _setup_logging(level=logging.INFO):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def _info(event, **fields):
    log.info(event, extra={"fields": fields})


def _dump(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


class Run:
    """One (config, seed, output directory) triple."""

    def __init__(self, cfg: ExperimentConfig, seed: int, out: Path, model: str | None = None):
        self.cfg, self.seed, self.out = cfg, seed, Path(out)
        self.model = model or cfg.model or next(iter(cfg.models))
        self._data = None

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.out / p

    def existing(self, paths, what: str) -> list[Path]:
        resolved = [self.path(p) for p in paths]
        for p in resolved:
            if not p.exists():
                raise ConfigurationError(f"{what}: path does not exist: {p}")
        return resolved

    # -- data ---------------------------------------------------------------

    def data(self) -> dict:
        if self._data is None:
            cfg, report_ = self.cfg, None
            csv = self.out / "data" / "dataset.csv"
            if isinstance(cfg.dataset, Path):
                if not cfg.dataset.exists():
                    raise ConfigurationError(f"dataset: path does not exist: {cfg.dataset}")
                full = read_dataset(cfg.dataset)
            elif csv.exists():
                full = read_dataset(csv)
            else:
                full, report_ = gen_complementary_classes(replace(cfg.dataset, seed=derive_seed(self.seed, "data")))
            split = split_indices(len(full), derive_seed(self.seed, "split"))
            d = {name: full.subset(idx) for name, idx in split.items()}
            d.update(full=full, split=split, report=report_)
            self._data = d
        return self._data

    def trials(self) -> dict:
        d = self.data()
        return trial_lists(d["full"].labels, d["split"], self.cfg.genuine_per_class, self.cfg.impostor_total, self.seed)

    # -- checkpoints ---------------------------------------------------------

    def describe(self, ckpt: Path) -> dict:
        """Sidecar metadata for a checkpoint (falls back to the file stem)."""
        side = ckpt.with_suffix(".json")
        if side.exists():
            return json.loads(side.read_text())
        return {"name": ckpt.stem, "model": ckpt.stem, "regime": "plain", "fusion": "single", "members": [ckpt.stem]}


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_data(run: Run) -> dict:
    d = run.data()
    base = run.out / "data"
    write_dataset(base / "dataset.csv", d["full"])
    _dump(base / "split.json", {k: v.tolist() for k, v in d["split"].items()})
    for part, trials in run.trials().items():
        write_trials(base / f"trials_{part}.txt", trials)
    summary = {"rows": len(d["full"]), "input_dim": d["full"].input_dim, "classes": d["full"].num_classes}
    if d["report"] is not None:
        _dump(base / "generation.json", d["report"].to_dict())
        summary["group_oracle_accuracy"] = d["report"].group_oracle_accuracy
    return summary


def _train(run: Run, alliance: bool) -> dict:
    cfg = run.cfg
    frozen = run.existing(cfg.avoid, "avoid") if alliance else []
    if alliance and not frozen:
        raise ConfigurationError("train-acorl needs at least one checkpoint under 'avoid'")
    d = run.data()
    spec = cfg.model_spec(run.model, d["full"].input_dim, d["full"].num_classes)
    name = f"{run.model}_acorl" if alliance else run.model
    opts = cfg.train_options(derive_seed(run.seed, f"model.{run.model}"))
    ckpt_dir = run.out / "checkpoints"
    snaps = set(cfg.snapshot_epochs)

    def on_epoch(epoch, model):
        rec = {"name": name, "epoch": epoch}
        _info("epoch", **rec)
        if epoch in snaps or epoch == cfg.epochs:
            save_checkpoint(ckpt_dir / name / f"epoch_{epoch:03d}.ckpt", model)

    if alliance:
        acfg = AcorlConfig(cfg.lam, cfg.temperature, [load_checkpoint(p) for p in frozen], cfg.projection, opts)
        result = train_alliance(spec, d["train"], acfg, d["eval"], on_epoch)
    else:
        result = train_plain(spec, d["train"], opts, d["eval"], on_epoch)
    save_checkpoint(ckpt_dir / f"{name}.ckpt", result.model)
    side = {"name": name, "model": run.model, "regime": "acorl" if alliance else "plain", "fusion": "single",
            "members": [run.model], "seed": run.seed, "head": spec.head}
    if alliance:
        side.update(avoid=[str(p) for p in cfg.avoid], lam=cfg.lam, temperature=cfg.temperature)
    _dump(ckpt_dir / f"{name}.json", side)
    metrics = run.out / "metrics" / f"{name}.jsonl"
    metrics.parent.mkdir(parents=True, exist_ok=True)
    metrics.write_text("".join(json.dumps(m, sort_keys=True) + "\n" for m in result.metrics))
    last = result.metrics[-1] if result.metrics else {}
    return {"checkpoint": str(ckpt_dir / f"{name}.ckpt"), "final": last}


def _fusion_members(run: Run):
    paths = run.existing(run.cfg.fusion.members, "fusion.members")
    if not paths:
        raise ConfigurationError("fusion.members must list at least one checkpoint")
    sides = [run.describe(p) for p in paths]
    return paths, [load_checkpoint(p) for p in paths], sides


def _fusion_sidecar(name, mode, sides, paths) -> dict:
    return {
        "name": name,
        "fusion": "L.F." if mode == "late" else "O.F.",
        "mode": mode,
        "regime": "acorl" if any(s.get("regime") == "acorl" for s in sides) else "plain",
        "members": [s["model"] for s in sides],
        "member_checkpoints": [s["name"] for s in sides],
        "member_paths": [str(p) for p in paths],
    }


def cmd_fuse_late(run: Run) -> dict:
    cfg, f = run.cfg, run.cfg.fusion
    paths, members, sides = _fusion_members(run)
    name = f.name or "lf_" + "+".join(s["name"] for s in sides)
    d = run.data()
    opts = replace(cfg.train_options(derive_seed(run.seed, f"fusion.{name}")), epochs=f.epochs)
    bundle = train_late_fusion(members, d["train"], opts, f.hidden, f.late_hidden_layers, d["eval"])
    out = run.out / "checkpoints" / f"{name}.ckpt"
    save_fusion(out, bundle, paths)
    _dump(out.with_suffix(".json"), _fusion_sidecar(name, "late", sides, paths))
    metrics = run.out / "metrics" / f"{name}.jsonl"
    metrics.write_text("".join(json.dumps(m, sort_keys=True) + "\n" for m in bundle.metrics))
    return {"checkpoint": str(out), "final": bundle.metrics[-1] if bundle.metrics else {}}


def cmd_fuse_output(run: Run) -> dict:
    f = run.cfg.fusion
    paths, members, sides = _fusion_members(run)
    heads = {m.spec.head for m in members}
    if len(heads) != 1:
        raise ContractViolation("fusion members must share a head kind")
    mode = f.mode if f.mode != "late" else ("output_weighted" if "classifier" in heads else "output_logreg")
    if (mode == "output_weighted") != ("classifier" in heads):
        raise ConfigurationError(f"fusion mode {mode} does not fit {heads.pop()} members")
    name = f.name or "of_" + "+".join(s["name"] for s in sides)
    d = run.data()
    bundle = FusionBundle(mode, members)
    summary = {}
    if mode == "output_weighted":
        calib = d["calib"]
        logits = np.stack([m.forward(calib.features).task_out.data for m in members])
        bundle.weights = fit_output_weights(logits, calib.labels, f.resolution)
        summary["weights"] = bundle.weights.tolist()
    else:
        cal = run.trials()["calib"]
        beta, b0 = fit_logreg(member_trial_scores(members, d["full"].features, cal.enroll, cal.test), cal.genuine)
        bundle.beta, bundle.intercept = beta, b0
        summary.update(beta=beta.tolist(), intercept=b0)
    out = run.out / "checkpoints" / f"{name}.ckpt"
    save_fusion(out, bundle, paths)
    _dump(out.with_suffix(".json"), _fusion_sidecar(name, mode, sides, paths))
    summary["checkpoint"] = str(out)
    return summary


def _evaluate(run: Run, ckpt: Path) -> dict:
    manifest, _ = read_container(ckpt)
    side = run.describe(ckpt)
    d = run.data()
    ev, full = d["eval"], d["full"]
    if manifest["kind"] == "model":
        model = load_checkpoint(ckpt)
        head = model.spec.head
        if head == "classifier":
            value = evaluate_model(model, ev)
        else:
            t = run.trials()["eval"]
            value = eer(cosine_scores(model.forward(full.features).task_out.data, t.enroll, t.test), t.genuine)[0]
    else:
        bundle = load_fusion(ckpt)
        head = bundle.members[0].spec.head
        if bundle.mode != "output_logreg" and head == "classifier":
            value = top1_accuracy(bundle.predict(ev.features), ev.labels)
        else:
            t = run.trials()["eval"]
            value = eer(bundle.score_trials(full.features, t.enroll, t.test), t.genuine)[0]
    return {
        "name": side["name"],
        "regime": side["regime"],
        "fusion": side["fusion"],
        "members": side["members"],
        "metric": "accuracy" if head == "classifier" else "eer",
        "value": float(value),
        "seed": run.seed,
    }


def _all_checkpoints(run: Run, kind: str | None = None) -> list[Path]:
    found = sorted((run.out / "checkpoints").glob("*.ckpt"))
    if kind is not None:
        found = [p for p in found if read_container(p)[0].get("kind") == kind]
    return found


def cmd_eval(run: Run) -> dict:
    ckpts = run.existing(run.cfg.eval_checkpoints, "eval.checkpoints") or _all_checkpoints(run)
    if not ckpts:
        raise DataError(f"no checkpoints to evaluate under {run.out / 'checkpoints'}")
    results = {}
    for ckpt in ckpts:
        rec = _evaluate(run, ckpt)
        _dump(run.out / "metrics" / f"eval_{rec['name']}.json", rec)
        _info("evaluated", name=rec["name"], metric=rec["metric"], value=rec["value"])
        results[rec["name"]] = {rec["metric"]: rec["value"]}
    return {"evaluated": results}


def cmd_attribute(run: Run) -> dict:
    cfg = run.cfg
    ckpts = run.existing(cfg.attribution_models, "attribution.models") or _all_checkpoints(run, "model")
    if not ckpts:
        raise DataError(f"no model checkpoints to attribute under {run.out / 'checkpoints'}")
    d = run.data()
    ev = d["eval"]
    k = min(cfg.attribution_samples, len(ev))
    ids = d["split"]["eval"][:k]
    baseline = d["train"].features.mean(axis=0)
    maps = {}
    for ckpt in ckpts:
        model = load_checkpoint(ckpt)
        name = run.describe(ckpt)["name"]
        if model.spec.head == "classifier":
            select = [class_logit(int(y)) for y in ev.labels[:k]]
        else:
            select = [cosine_to(model.params["head.weight"][int(y)]) for y in ev.labels[:k]]
        maps[name] = [
            integrated_gradients(model, s, x, baseline, cfg.attribution_steps, name, int(i), "train_mean")
            for s, x, i in zip(select, ev.features[:k], ids)
        ]
        write_attributions(run.out / "attributions" / f"{name}.csv", maps[name])
        _info("attributed", name=name, samples=k)
    scores, skipped = {}, {}
    names = list(maps)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            scores[f"{a}~{b}"], skipped[f"{a}~{b}"] = complementarity_score(maps[a], maps[b])
    _dump(run.out / "metrics" / "complementarity.json", {"scores": scores, "skipped": skipped, "samples": k})
    gaps = {n: max(m.completeness_gap for m in ms) for n, ms in maps.items()}
    return {"complementarity": scores, "max_completeness_gap": gaps}


def cmd_gradcheck(run: Run) -> dict:
    res = gradcheck.run_suite(run.seed)
    record = {
        "seed": run.seed,
        "max_primitive_error": float(res["max_primitive_error"]),
        "max_composition_error": float(res["max_composition_error"]),
        "max_error": float(res["max_error"]),
        "compositions": res["compositions"],
        "rejected": res["rejected"],
        "passed": bool(res["passed"]),
        "primitives": {k: float(v) for k, v in res["primitives"].items()},
    }
    _dump(run.out / "metrics" / "gradcheck.json", record)
    summary = {k: v for k, v in record.items() if k != "primitives"}
    summary["seconds"] = round(res["seconds"], 3)
    if not res["passed"]:
        raise ContractViolation(f"gradcheck failed: max relative error {res['max_error']:.3g} >= {gradcheck.TOLERANCE}")
    return summary


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": lambda run: _train(run, alliance=False),
    "train-acorl": lambda run: _train(run, alliance=True),
    "fuse-late": cmd_fuse_late,
    "fuse-output": cmd_fuse_output,
    "eval": cmd_eval,
    "attribute": cmd_attribute,
    "gradcheck": cmd_gradcheck,
}


# --------------------------------------------------------------------------
# driver


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acorl", description="Alliance learning experiments on synthetic data.")
    p.add_argument("command", choices=COMMANDS, help="subcommand to run")
    p.add_argument("runs", nargs="*", help="run directories (report only)")
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, nargs="+", help="override the config seed; several seeds give seed_<n>/ subdirectories")
    p.add_argument("--out", help="output directory (overrides 'out' in the config)")
    p.add_argument("--model", help="model key to train (train, train-acorl); defaults to 'model' in the config")
    p.add_argument("--members", nargs="+", help="override fusion.members (fuse-late, fuse-output)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across seeds")
    p.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    return p


def _run_one(command: str, cfg: ExperimentConfig, seed: int, out: Path, model: str | None) -> tuple[int, dict]:
    _setup_logging(log.level or logging.INFO)
    base = {"seed": seed, "out": str(out)}
    try:
        run = Run(cfg, seed, out, model)
        _info("start", command=command, seed=seed, out=str(out))
        result = HANDLERS[command](run)
        _info("done", command=command, seed=seed)
        return 0, {**base, **result}
    except AcorlError as exc:
        log.error(str(exc), extra={"fields": {"command": command, "seed": seed, "exit_code": exc.exit_code}})
        return exc.exit_code, {**base, "error": str(exc), "exit_code": exc.exit_code}
    except OSError as exc:
        log.error(str(exc), extra={"fields": {"command": command, "seed": seed, "exit_code": DataError.exit_code}})
        return DataError.exit_code, {**base, "error": str(exc), "exit_code": DataError.exit_code}


def _star(args):
    return _run_one(*args)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_intermixed_args(argv)
    _setup_logging(logging.WARNING if args.quiet else logging.INFO)
    record = {"command": args.command}
    try:
        cfg = load_config(args.config)
        if args.runs and args.command != "report":
            raise ConfigurationError(f"unexpected positional arguments for {args.command}: {args.runs}")
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        if args.members:
            cfg.fusion = replace(cfg.fusion, members=list(args.members))
        out = args.out or cfg.out
        if args.command == "report":
            out = Path(out or ".")
            rep = report.write_report(args.runs or [out], out)
            record.update(status="ok", report=str(out / "report.txt"), runs=len(rep["runs"]), cells=len(rep["cells"]))
            print(json.dumps(record, sort_keys=True))
            return 0
        if out is None:
            raise ConfigurationError("no output directory: pass --out or set 'out' in the config")
    except AcorlError as exc:
        log.error(str(exc), extra={"fields": {"command": args.command, "exit_code": exc.exit_code}})
        record.update(status="error", error=str(exc), exit_code=exc.exit_code)
        print(json.dumps(record, sort_keys=True))
        if isinstance(exc, ConfigurationError):
            parser.print_usage(sys.stderr)
        return exc.exit_code

    seeds = args.seed or [cfg.seed]
    out = Path(out)
    jobs = [
        (args.command, cfg, s, out if len(seeds) == 1 else out / f"seed_{s}", args.model)
        for s in seeds
    ]
    if args.jobs > 1 and len(jobs) > 1:
        with multiprocessing.get_context("fork").Pool(min(args.jobs, len(jobs))) as pool:
            results = pool.map(_star, jobs)
    else:
        results = [_run_one(*j) for j in jobs]
    codes = [c for c, _ in results]
    code = next((c for c in codes if c), 0)
    record.update(status="ok" if code == 0 else "error", exit_code=code, runs=[r for _, r in results])
    print(json.dumps(record, sort_keys=True, default=float))
    return code


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
