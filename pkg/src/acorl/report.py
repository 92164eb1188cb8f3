"""Aggregate per-seed evaluation records into the fusion comparison table.

Each run directory holds ``metrics/eval_*.json`` records written by
``acorl eval``. A cell of the table is keyed by (training regime, fusion
kind, member set) and shows the mean and sample standard deviation of the
metric over runs (a single run reports a standard deviation of 0).
"""

from __future__ import annotations

import json
import statistics
from pathlib import Path

from .errors import DataError

REGIMES = ("plain", "acorl")
FUSIONS = ("single", "L.F.", "O.F.")
REGIME_LABEL = {"plain": "plain", "acorl": "ACoRL"}


def expand_run_dirs(paths) -> list[Path]:
    """A directory with ``metrics/`` is a run; otherwise its ``seed_*`` children are."""
    runs = []
    for p in map(Path, paths):
        if (p / "metrics").is_dir():
            runs.append(p)
        elif p.is_dir():
            runs.extend(sorted(c for c in p.glob("seed_*") if (c / "metrics").is_dir()))
    return runs


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable metrics record: {exc}") from None


def collect(run_dirs) -> list[dict]:
    runs = expand_run_dirs(run_dirs)
    if not runs:
        raise DataError(f"no run directories with metrics under {[str(p) for p in run_dirs]}")
    records, keysets = [], {}
    for run in runs:
        found = sorted((run / "metrics").glob("eval_*.json"))
        if not found:
            raise DataError(f"{run}: no eval_*.json records (run `acorl eval` first)")
        keys = set()
        for f in found:
            rec = _read_json(f)
            rec["run"] = str(run)
            key = (rec["regime"], rec["fusion"], "+".join(rec["members"]), rec["metric"])
            if key in keys:
                raise DataError(f"{run}: two records for {key}")
            keys.add(key)
            records.append(rec)
        keysets[str(run)] = keys
    first = next(iter(keysets))
    for run, keys in keysets.items():
        if keys != keysets[first]:
            diff = sorted("/".join(k) for k in keys ^ keysets[first])
            raise DataError(f"inconsistent member sets across seeds: {first} vs {run} differ in {diff}")
    return records


def _complementarity(runs) -> dict:
    pairs: dict[str, list[float]] = {}
    for run in runs:
        f = run / "metrics" / "complementarity.json"
        if f.exists():
            for pair, score in _read_json(f)["scores"].items():
                pairs.setdefault(pair, []).append(score)
    return {k: _stats(v) for k, v in sorted(pairs.items())}


def _stats(values) -> dict:
    values = [float(v) for v in values]
    return {
        "mean": statistics.fmean(values),
        "stdev": statistics.stdev(values) if len(values) > 1 else 0.0,
        "n": len(values),
        "values": values,
    }


def aggregate(records) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault((r["metric"], r["regime"], r["fusion"], tuple(r["members"])), []).append(r)
    cells = []
    for (metric, regime, fusion, members), recs in groups.items():
        recs = sorted(recs, key=lambda r: (r["seed"], r["run"]))
        cell = {"metric": metric, "regime": regime, "fusion": fusion, "members": list(members)}
        cell.update(_stats([r["value"] for r in recs]))
        cell["seeds"] = [r["seed"] for r in recs]
        cells.append(cell)
    return sorted(cells, key=_cell_order)


def _cell_order(cell):
    return (
        cell["metric"],
        len(cell["members"]),
        cell["members"],
        REGIMES.index(cell["regime"]) if cell["regime"] in REGIMES else 99,
        FUSIONS.index(cell["fusion"]) if cell["fusion"] in FUSIONS else 99,
    )


def _fmt(cell) -> str:
    if cell["metric"] == "accuracy":
        return f"{100 * cell['mean']:.2f} ± {100 * cell['stdev']:.2f}"
    return f"{cell['mean']:.4f} ± {cell['stdev']:.4f}"


def render_text(report: dict) -> str:
    """Aligned plain-text tables: member sets down, (regime, fusion) across, one table per metric."""
    lines = []
    n = len(report["runs"])
    for metric in sorted({c["metric"] for c in report["cells"]}):
        cells = [c for c in report["cells"] if c["metric"] == metric]
        cols = sorted({(c["regime"], c["fusion"]) for c in cells}, key=lambda k: (
            REGIMES.index(k[0]) if k[0] in REGIMES else 99, FUSIONS.index(k[1]) if k[1] in FUSIONS else 99))
        rows = []
        for c in cells:
            label = "+".join(c["members"])
            if label not in rows:
                rows.append(label)
        lookup = {("+".join(c["members"]), c["regime"], c["fusion"]): _fmt(c) for c in cells}
        unit = "top-1 %" if metric == "accuracy" else "EER"
        header = ["members"] + [f"{REGIME_LABEL.get(r, r)} {f}" for r, f in cols]
        body = [[row] + [lookup.get((row, r, f), "-") for r, f in cols] for row in rows]
        widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
        lines.append(f"{metric} ({unit}, mean ± stdev over {n} run{'s' if n != 1 else ''})")
        for line in [header] + body:
            lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(line, widths))))
        lines.append("")
    if report["complementarity"]:
        lines.append("complementarity score (mean |IG| cosine, lower = more complementary)")
        width = max(len(k) for k in report["complementarity"])
        for pair, s in report["complementarity"].items():
            lines.append(f"{pair.ljust(width)}  {s['mean']:.4f} ± {s['stdev']:.4f}")
        lines.append("")
    return "\n".join(lines)


def build_report(run_dirs) -> dict:
    runs = expand_run_dirs(run_dirs)
    records = collect(run_dirs)
    return {
        "runs": [str(r) for r in runs],
        "seeds": sorted({r["seed"] for r in records}),
        "cells": aggregate(records),
        "complementarity": _complementarity(runs),
    }


def write_report(run_dirs, out) -> dict:
    report = build_report(run_dirs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    (out / "report.txt").write_text(render_text(report))
    return report
