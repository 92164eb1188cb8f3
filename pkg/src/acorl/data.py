"""Synthetic complementary-cue datasets, verification trials and their file formats."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractViolation, ParseError
from .rng import component_rng, make_rng, normal, permutation

MAX_ATTEMPTS = 100_000
SPLIT_FRACTIONS = (0.7, 0.2, 0.1)


@dataclass(frozen=True)
class CueGroup:
    dims: int
    separation: float


@dataclass(frozen=True)
class ComplementaryCueSpec:
    """Classes separated along several independent feature groups.

    Every group alone is enough to classify (given a non-zero separation); the
    remaining ``noise_dims`` carry no label information.
    """

    num_classes: int = 8
    samples_per_class: int = 600
    groups: tuple[CueGroup, ...] = (CueGroup(12, 7.0), CueGroup(12, 5.0))
    noise_dims: int = 16
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        groups = tuple(g if isinstance(g, CueGroup) else CueGroup(**g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.num_classes < 2 or self.samples_per_class < 1:
            raise ConfigurationError("need at least 2 classes and 1 sample per class")
        if any(g.dims < 1 or g.separation < 0 for g in groups) or self.noise_dims < 0 or self.noise_sigma < 0:
            raise ConfigurationError(f"invalid cue layout: {self}")

    @property
    def input_dim(self) -> int:
        return sum(g.dims for g in self.groups) + self.noise_dims

    def group_slices(self) -> list[slice]:
        out, start = [], 0
        for g in self.groups:
            out.append(slice(start, start + g.dims))
            start += g.dims
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = [asdict(g) for g in self.groups]
        return d


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ContractViolation("features must be N x d with one label per row")

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])


@dataclass
class GenerationReport:
    group_oracle_accuracy: list[float]
    min_centroid_distance: list[float]
    attempts: list[int]
    input_dim: int
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _centroids(rng, classes: int, dims: int, separation: float) -> tuple[np.ndarray, int]:
    # orthogonal points on this sphere sit exactly `separation` apart; a
    # radius of separation/2 cannot hold more than 4 points 0.8*separation apart
    radius, floor = separation / np.sqrt(2.0), 0.8 * separation
    out = np.zeros((classes, dims))
    attempts = 0
    for c in range(classes):
        while True:
            attempts += 1
            if attempts > MAX_ATTEMPTS:
                raise ConfigurationError(
                    f"could not place {classes} centroids {floor:.3g} apart in {dims} dims "
                    f"after {MAX_ATTEMPTS} attempts"
                )
            d = normal(rng, dims)
            cand = radius * d / np.linalg.norm(d)
            if c == 0 or np.linalg.norm(out[:c] - cand, axis=1).min() >= floor:
                out[c] = cand
                break
    return out, attempts


def nearest_centroid_accuracy(train: Dataset, test: Dataset) -> float:
    classes = np.unique(train.labels)
    cents = np.stack([train.features[train.labels == c].mean(axis=0) for c in classes])
    d2 = ((test.features[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    return float((classes[np.argmin(d2, axis=1)] == test.labels).mean())


def gen_complementary_classes(spec: ComplementaryCueSpec) -> tuple[Dataset, GenerationReport]:
    """Draw the dataset; rows are grouped by class, class 0 first.

    Draw order: centroids group by group (class by class within a group), then
    for each class an ``n x input_dim`` block of unit normals. Cue dims get the
    class centroid added; pure-noise dims are multiplied by ``noise_sigma``.
    """
    rng = make_rng(spec.seed)
    C, n = spec.num_classes, spec.samples_per_class
    centroids, attempts = [], []
    for g in spec.groups:
        cents, tries = _centroids(rng, C, g.dims, g.separation)
        centroids.append(cents)
        attempts.append(tries)
    slices = spec.group_slices()
    noise = slice(spec.input_dim - spec.noise_dims, spec.input_dim)
    feats = np.empty((C * n, spec.input_dim))
    for c in range(C):
        block = normal(rng, (n, spec.input_dim))
        for sl, cents in zip(slices, centroids):
            block[:, sl] += cents[c]
        block[:, noise] *= spec.noise_sigma
        feats[c * n:(c + 1) * n] = block
    labels = np.repeat(np.arange(C), n)
    data = Dataset(feats, labels)

    fit = np.arange(len(labels)) % 2 == 0
    oracle = []
    for sl in slices:
        sub = Dataset(feats[:, sl], labels)
        oracle.append(nearest_centroid_accuracy(sub.subset(fit), sub.subset(~fit)))
    min_dist = []
    for cents in centroids:
        diff = np.linalg.norm(cents[:, None] - cents[None, :], axis=2)
        min_dist.append(float(diff[np.triu_indices(C, 1)].min()))
    return data, GenerationReport(oracle, min_dist, attempts, spec.input_dim)


def split_indices(n: int, seed: int) -> dict[str, np.ndarray]:
    """Deterministic 70/20/10 train/eval/calibration split."""
    order = permutation(component_rng(seed, "split"), n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_eval = int(round(SPLIT_FRACTIONS[1] * n))
    return {
        "train": np.sort(order[:n_train]),
        "eval": np.sort(order[n_train:n_train + n_eval]),
        "calib": np.sort(order[n_train + n_eval:]),
    }


# --------------------------------------------------------------------------
# verification trials


@dataclass
class TrialList:
    """Genuine (1) / impostor (0) pairs of dataset row ids."""

    genuine: np.ndarray
    enroll: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.int64)
        self.enroll = np.asarray(self.enroll, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)
        if not (self.genuine.shape == self.enroll.shape == self.test.shape):
            raise ContractViolation("trial columns must have equal length")

    def __len__(self):
        return len(self.genuine)

    def check(self, num_rows: int):
        if len(set(self.genuine.tolist())) < 2:
            raise ContractViolation("trial list needs both genuine and impostor trials")
        ids = np.concatenate([self.enroll, self.test])
        if (ids < 0).any() or (ids >= num_rows).any():
            raise ContractViolation(f"trial ids must index rows in [0, {num_rows})")


def _take_without_replacement(rng, total: int, k: int) -> np.ndarray:
    keys = rng.random(total)
    return np.sort(np.argsort(keys, kind="stable")[:k])


def gen_trial_list(labels, genuine_per_class: int, impostor_total: int, seed: int, subset=None) -> TrialList:
    """Sample trials uniformly without replacement.

    ``subset`` restricts sampling to those dataset row ids (e.g. one split);
    ids in the result always index the full ``labels`` array.
    """
    labels = np.asarray(labels, dtype=np.int64)
    ids = np.arange(len(labels)) if subset is None else np.sort(np.asarray(subset, dtype=np.int64))
    lab = labels[ids]
    classes, counts = np.unique(lab, return_counts=True)
    if (counts < 2).any():
        raise ContractViolation("every class needs at least 2 samples to form genuine trials")
    rng = make_rng(seed)
    enroll, test, genuine = [], [], []
    for c, cnt in zip(classes, counts):
        pairs = cnt * (cnt - 1) // 2
        if genuine_per_class > pairs:
            raise ConfigurationError(f"class {c} has only {pairs} genuine pairs, {genuine_per_class} requested")
        members = ids[lab == c]
        iu, ju = np.triu_indices(cnt, 1)
        pick = _take_without_replacement(rng, pairs, genuine_per_class)
        enroll.append(members[iu[pick]])
        test.append(members[ju[pick]])
        genuine.append(np.ones(genuine_per_class, dtype=np.int64))

    n = len(ids)
    imp_pairs = (n * n - int((counts.astype(np.int64) ** 2).sum())) // 2
    if impostor_total > imp_pairs:
        raise ConfigurationError(f"only {imp_pairs} impostor pairs available, {impostor_total} requested")
    if impostor_total * 2 > imp_pairs:
        iu, ju = np.triu_indices(n, 1)
        cross = lab[iu] != lab[ju]
        iu, ju = iu[cross], ju[cross]
        pick = _take_without_replacement(rng, len(iu), impostor_total)
        ei, ti = iu[pick], ju[pick]
    else:
        # rejection sampling is uniform over the cross-class pair set
        seen, ei, ti = set(), [], []
        while len(ei) < impostor_total:
            i, j = (int(v) for v in np.floor(rng.random(2) * n))
            if i == j or lab[i] == lab[j]:
                continue
            key = (min(i, j), max(i, j))
            if key in seen:
                continue
            seen.add(key)
            ei.append(key[0])
            ti.append(key[1])
        ei, ti = np.array(ei, dtype=np.int64), np.array(ti, dtype=np.int64)
    enroll.append(ids[ei])
    test.append(ids[ti])
    genuine.append(np.zeros(impostor_total, dtype=np.int64))
    return TrialList(np.concatenate(genuine), np.concatenate(enroll), np.concatenate(test))


# --------------------------------------------------------------------------
# file formats


def format_dataset(data: Dataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(["label"] + [f"f_{i}" for i in range(data.input_dim)]) + "\n")
    for y, row in zip(data.labels, data.features):
        buf.write(str(int(y)) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def write_dataset(path, data: Dataset):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_dataset(data), encoding="ascii")


def parse_dataset(text: str) -> Dataset:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if not header:
        raise ParseError("no header", line=1)
    if header[0] != "label" or header[1:] != [f"f_{i}" for i in range(len(header) - 1)]:
        raise ParseError("header must be label,f_0,...,f_{d-1}", line=1)
    width = len(header)
    labels, feats = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line=lineno)
        try:
            labels.append(int(row[0]))
            feats.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", line=lineno) from None
    if not labels:
        raise ParseError("no data rows", line=2)
    return Dataset(np.array(feats, dtype=np.float64).reshape(len(labels), width - 1), np.array(labels))


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="ascii"))


def format_trials(trials: TrialList) -> str:
    return "".join(f"{g} {e} {t}\n" for g, e, t in zip(trials.genuine, trials.enroll, trials.test))


def write_trials(path, trials: TrialList):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_trials(trials), encoding="ascii")


def parse_trials(text: str) -> TrialList:
    g, e, t = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'g enroll_id test_id', found {len(parts)} fields", line=lineno)
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise ParseError("trial fields must be integers", line=lineno) from None
        if vals[0] not in (0, 1):
            raise ParseError("trial label must be 0 or 1", line=lineno)
        g.append(vals[0])
        e.append(vals[1])
        t.append(vals[2])
    if not g:
        raise ParseError("no trials", line=1)
    return TrialList(g, e, t)


def read_trials(path) -> TrialList:
    return parse_trials(Path(path).read_text(encoding="ascii"))
