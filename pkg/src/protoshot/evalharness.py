"""Evaluation protocol: stratified folds, seeded few-shot draws, metrics,
and the full (method x fold x seed x shots x top-K) grid with aggregation.

Determinism rules. All randomness flows through numpy's PCG64, seeded by
:func:`derive_seed`, a splitmix64 chain over a base seed and purpose tags.
Grid cells are independent and may run on a thread pool; results are sorted
by a canonical key before serialization, so reports are byte-identical
regardless of thread count. Reports echo the generator identity, the
mixing rule, and every seed so a run can be reproduced from the report
alone.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .adapters import (
    SlidePrediction,
    build_cache,
    build_prototypes,
    mizero_predict,
    predict_prototype,
    simpleshot_prototypes,
    tip_adapter_predict,
    visionshot_slide_embedding,
)
from .embedstore import DatasetManifest, SlideBag, TextClassifier
from .errors import (
    ClassAbsent,
    ClassTooSmall,
    GridCellError,
    InsufficientSupport,
    LengthMismatch,
    SingleCluster,
    TooFewPoints,
)
from .simsel import bgap

METHODS = ("visionshot", "simpleshot", "mizero", "tipadapter")

PRNG_SPEC = {
    "generator": "numpy.random.PCG64",
    "stream_split": (
        "splitmix64 chain: state starts at splitmix64(base) and folds in each "
        "tag via splitmix64(state XOR tag); string tags hash to 64 bits with "
        "blake2b(digest_size=8), little-endian"
    ),
}

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, *tags: int | str) -> int:
    """Derive an independent 64-bit seed from `base` and purpose tags."""
    state = _splitmix64(base & _MASK64)
    for tag in tags:
        if isinstance(tag, str):
            tag = int.from_bytes(
                hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little"
            )
        state = _splitmix64(state ^ (tag & _MASK64))
    return state


# --- stratified folds and few-shot draws -----------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    num_folds: int
    fold_of: Mapping[str, int]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "fold_of", dict(self.fold_of))

    def fold_ids(self, fold: int) -> list[str]:
        return [sid for sid, f in self.fold_of.items() if f == fold]

    def train_ids(self, fold: int) -> list[str]:
        return [sid for sid, f in self.fold_of.items() if f != fold]


@dataclass(frozen=True)
class FewShotDraw:
    k: int
    seed: int
    support_ids: tuple[str, ...]


def stratified_kfold(
    labels: Mapping[str, int] | Iterable[tuple[str, int]],
    num_folds: int,
    seed: int,
) -> FoldAssignment:
    """Assign slides to folds, balanced within every class.

    Members of each class are shuffled by one PCG64 stream (classes
    processed in ascending index order) and dealt round-robin, so per-class
    fold sizes differ by at most one. Deterministic given the label order
    and the seed.

    Raises:
        ClassTooSmall: some class has fewer members than folds.
    """
    items = list(labels.items()) if isinstance(labels, Mapping) else list(labels)
    if num_folds < 2:
        raise ValueError(f"num_folds must be >= 2, got {num_folds}")
    by_class: dict[int, list[str]] = {}
    for sid, label in items:
        by_class.setdefault(int(label), []).append(sid)
    for label in sorted(by_class):
        if len(by_class[label]) < num_folds:
            raise ClassTooSmall(label, len(by_class[label]), num_folds)
    rng = np.random.default_rng(seed)
    fold_of: dict[str, int] = {}
    for label in sorted(by_class):
        ids = by_class[label]
        order = rng.permutation(len(ids))
        for deal, j in enumerate(order):
            fold_of[ids[j]] = deal % num_folds
    return FoldAssignment(
        num_folds=num_folds,
        fold_of={sid: fold_of[sid] for sid, _ in items},
        seed=seed,
    )


def sample_few_shot(
    train_ids: Sequence[Sequence[str]], k: int, seed: int
) -> FewShotDraw:
    """Draw k support slides per class, uniformly without replacement.

    `train_ids` is indexed by class. A single PCG64 stream serves the
    classes in ascending index order; the draw is deterministic given the
    seed and the id order.

    Raises:
        InsufficientSupport: some class has fewer than k training slides.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    picked: list[str] = []
    for c, ids in enumerate(train_ids):
        if len(ids) < k:
            raise InsufficientSupport(c, len(ids), k)
        chosen = rng.choice(len(ids), size=k, replace=False)
        picked.extend(ids[int(i)] for i in chosen)
    return FewShotDraw(k=k, seed=seed, support_ids=tuple(picked))


# --- metrics -----------------------------------------------------------------------


def balanced_accuracy(
    predictions: Sequence[SlidePrediction] | Sequence[int],
    labels: Sequence[int],
    num_classes: int | None = None,
) -> tuple[float, np.ndarray]:
    """Mean of per-class recalls; returns (score, per-class recall vector).

    Classes run 0..num_classes-1 (inferred as max(labels)+1 when omitted)
    and every one of them must appear among the labels.

    Raises:
        LengthMismatch, ClassAbsent.
    """
    preds = np.asarray(
        [p.predicted if isinstance(p, SlidePrediction) else int(p) for p in predictions],
        dtype=np.int64,
    )
    y = np.asarray(list(labels), dtype=np.int64)
    if preds.shape[0] != y.shape[0]:
        raise LengthMismatch(preds.shape[0], y.shape[0])
    if num_classes is None:
        num_classes = int(y.max()) + 1 if y.size else 0
    recalls = np.empty(num_classes, dtype=np.float64)
    for c in range(num_classes):
        mask = y == c
        if not mask.any():
            raise ClassAbsent(c)
        recalls[c] = np.mean(preds[mask] == c)
    return float(recalls.mean()), recalls


def _pairwise_distances(points: np.ndarray, block: int = 256) -> np.ndarray:
    """Euclidean distance matrix, computed blockwise without the Gram trick
    (which loses precision for near-coincident points)."""
    m = points.shape[0]
    out = np.empty((m, m), dtype=np.float64)
    for start in range(0, m, block):
        stop = min(start + block, m)
        diff = points[start:stop, None, :] - points[None, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def silhouette(points: np.ndarray, labels: Sequence[int]) -> float:
    """Mean silhouette with Euclidean distance.

    Per point: a = mean distance to its own cluster (excluding itself),
    b = smallest mean distance to any other cluster, s = (b - a) / max(a, b).
    Singleton clusters and a = b = 0 contribute s = 0.

    Raises:
        TooFewPoints: fewer than 2 points.
        SingleCluster: fewer than 2 distinct labels.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise TooFewPoints(pts.shape[0] if pts.ndim == 2 else 0)
    labs = np.asarray(list(labels), dtype=np.int64)
    if labs.shape[0] != pts.shape[0]:
        raise LengthMismatch(pts.shape[0], labs.shape[0])
    clusters = np.unique(labs)
    if clusters.shape[0] < 2:
        raise SingleCluster()
    dist = _pairwise_distances(pts)
    members = [labs == c for c in clusters]
    sums = np.stack([dist[:, mask].sum(axis=1) for mask in members], axis=1)
    counts = np.array([mask.sum() for mask in members], dtype=np.float64)
    own = np.searchsorted(clusters, labs)
    scores = np.zeros(pts.shape[0], dtype=np.float64)
    for i in range(pts.shape[0]):
        n_own = counts[own[i]]
        if n_own <= 1:
            continue  # singleton convention: s = 0
        a = sums[i, own[i]] / (n_own - 1.0)
        other = np.delete(sums[i] / counts, own[i])
        b = float(other.min())
        denom = max(a, b)
        if denom > 0.0:
            scores[i] = (b - a) / denom
    return float(scores.mean())


# --- report model --------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    """One grid cell result. `seed`/`k`/`top_k` are None where the method has
    no such axis; `prompt` is set only for zero-shot records."""

    method: str
    fold: int
    seed: int | None
    k: int | None
    top_k: int | None
    prompt: int | None
    balanced_accuracy: float
    per_class_recalls: tuple[float, ...]

    def __post_init__(self):
        if not 0.0 <= self.balanced_accuracy <= 1.0:
            raise ValueError(f"balanced accuracy {self.balanced_accuracy} outside [0, 1]")
        object.__setattr__(
            self, "per_class_recalls", tuple(float(r) for r in self.per_class_recalls)
        )


@dataclass(frozen=True)
class Aggregate:
    method: str
    k: int | None
    top_k: int | None
    mean: float
    std: float
    num_records: int


@dataclass(frozen=True)
class EvalReport:
    config: dict
    records: tuple[EvalRecord, ...]
    aggregates: tuple[Aggregate, ...]

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "records": [
                {
                    "method": r.method,
                    "fold": r.fold,
                    "seed": r.seed,
                    "k": r.k,
                    "top_k": r.top_k,
                    "prompt": r.prompt,
                    "balanced_accuracy": r.balanced_accuracy,
                    "per_class_recalls": list(r.per_class_recalls),
                }
                for r in self.records
            ],
            "aggregates": [
                {
                    "method": a.method,
                    "k": a.k,
                    "top_k": a.top_k,
                    "mean": a.mean,
                    "std": a.std,
                    "num_records": a.num_records,
                }
                for a in self.aggregates
            ],
        }
        return canonical_json(payload) + "\n"

    def to_csv(self) -> str:
        lines = ["method,fold,seed,k,top_k,balanced_accuracy"]
        for r in self.records:
            lines.append(
                ",".join(
                    [
                        r.method,
                        str(r.fold),
                        "" if r.seed is None else str(r.seed),
                        "" if r.k is None else str(r.k),
                        "" if r.top_k is None else str(r.top_k),
                        format(r.balanced_accuracy, ".6g"),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        raw = json.loads(text)
        records = tuple(
            EvalRecord(
                method=r["method"],
                fold=int(r["fold"]),
                seed=None if r["seed"] is None else int(r["seed"]),
                k=None if r["k"] is None else int(r["k"]),
                top_k=None if r["top_k"] is None else int(r["top_k"]),
                prompt=None if r.get("prompt") is None else int(r["prompt"]),
                balanced_accuracy=float(r["balanced_accuracy"]),
                per_class_recalls=tuple(float(x) for x in r["per_class_recalls"]),
            )
            for r in raw["records"]
        )
        aggregates = tuple(
            Aggregate(
                method=a["method"],
                k=None if a["k"] is None else int(a["k"]),
                top_k=None if a["top_k"] is None else int(a["top_k"]),
                mean=float(a["mean"]),
                std=float(a["std"]),
                num_records=int(a["num_records"]),
            )
            for a in raw["aggregates"]
        )
        return EvalReport(config=raw["config"], records=records, aggregates=aggregates)


def canonical_json(obj) -> str:
    """Serialize with sorted keys and 17-significant-digit floats.

    Byte-stable across runs; floats round-trip exactly at 17 digits.
    """
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not np.isfinite(value):
            raise ValueError(f"non-finite float {value} in report")
        return format(value, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    if isinstance(obj, Mapping):
        if any(not isinstance(k, str) for k in obj):
            raise TypeError("canonical JSON requires string keys")
        items = sorted(obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{canonical_json(v)}" for k, v in items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__} canonically")


def _opt(v):
    return -1 if v is None else v


def _record_key(r: EvalRecord):
    return (r.method, _opt(r.k), _opt(r.top_k), _opt(r.prompt), _opt(r.seed), r.fold)


def aggregate_records(records: Sequence[EvalRecord]) -> tuple[Aggregate, ...]:
    """Mean and sample std per (method, k, top_k).

    For few-shot methods the spread axis is the seed: fold results are
    averaged per seed first, then mean/std (ddof=1) run over the per-seed
    means. Zero-shot uses the prompt as the spread axis the same way. A
    single-group std is reported as 0.0.
    """
    groups: dict[tuple, list[EvalRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.k, r.top_k), []).append(r)
    out = []
    for (method, k, top_k), recs in sorted(
        groups.items(), key=lambda kv: (kv[0][0], _opt(kv[0][1]), _opt(kv[0][2]))
    ):
        axis = "prompt" if method == "mizero" else "seed"
        by_axis: dict[int | None, list[float]] = {}
        for r in recs:
            by_axis.setdefault(getattr(r, axis), []).append(r.balanced_accuracy)
        means = np.array(
            [np.mean(v) for _, v in sorted(by_axis.items(), key=lambda kv: _opt(kv[0]))]
        )
        std = float(np.std(means, ddof=1)) if means.size > 1 else 0.0
        out.append(
            Aggregate(
                method=method,
                k=k,
                top_k=top_k,
                mean=float(means.mean()),
                std=std,
                num_records=len(recs),
            )
        )
    return tuple(out)


# --- grid runner ---------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    """Everything that defines an evaluation run except the data itself.

    Defaults reproduce the standard protocol: 5 stratified folds, shots
    {2, 4, 8, 16}, patch selection sizes {2, 20, 200, 2000}, five few-shot
    seeds derived from `base_seed` (unless `seeds` is given explicitly).
    """

    methods: tuple[str, ...] = METHODS
    num_folds: int = 5
    k_grid: tuple[int, ...] = (2, 4, 8, 16)
    top_k_grid: tuple[int, ...] = (2, 20, 200, 2000)
    seeds: tuple[int, ...] | None = None
    num_seeds: int = 5
    base_seed: int = 0
    tip_alpha: float = 1.0
    tip_beta: float = 5.5
    normalize_prototypes: bool = True

    def __post_init__(self):
        if not self.methods:
            raise ValueError("no methods requested")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if not self.k_grid or not self.top_k_grid:
            raise ValueError("k_grid and top_k_grid must be nonempty")

    def resolved_seeds(self) -> tuple[int, ...]:
        if self.seeds is not None:
            return tuple(int(s) for s in self.seeds)
        return tuple(
            derive_seed(self.base_seed, "fewshot-seed", i) for i in range(self.num_seeds)
        )


def run_grid(
    manifest: DatasetManifest,
    bags: Sequence[SlideBag],
    classifier: TextClassifier,
    config: GridConfig = GridConfig(),
    threads: int = 1,
) -> EvalReport:
    """Run the full evaluation grid and aggregate the results.

    Protocol per fold: the fold is the test split; for each (seed, k) a
    support set of k slides per class is drawn from the remaining folds and
    shared by every few-shot method, then each method is built on that
    support and scored on the test split with balanced accuracy. Zero-shot
    consumes no support and is scored once per (fold, prompt).

    The fold assignment comes from derive_seed(base_seed, "folds"); each
    support draw from derive_seed(seed, "support", fold, k). Cells run
    independently (optionally on `threads` workers) and are sorted
    canonically before aggregation, so the report is a pure function of the
    data and the config.

    Raises:
        GridCellError: a cell failed; the message names it.
    """
    if classifier.num_classes != len(manifest.classes):
        raise ValueError(
            f"classifier has {classifier.num_classes} classes, manifest "
            f"{len(manifest.classes)}"
        )
    bags_by_id = {bag.slide_id: bag for bag in bags}
    missing = [rec.slide_id for rec in manifest.slides if rec.slide_id not in bags_by_id]
    if missing:
        raise ValueError(f"bags missing for manifest slides: {missing[:5]}")
    num_classes = len(manifest.classes)
    labels = {rec.slide_id: manifest.class_index(rec.class_name) for rec in manifest.slides}
    for sid, label in labels.items():
        if bags_by_id[sid].label != label:
            raise ValueError(
                f"slide {sid!r} label {bags_by_id[sid].label} disagrees with manifest ({label})"
            )

    fold_seed = derive_seed(config.base_seed, "folds")
    assignment = stratified_kfold(labels, config.num_folds, fold_seed)
    seeds = config.resolved_seeds()
    fewshot_methods = [m for m in config.methods if m != "mizero"]

    test_bags = {
        f: [bags_by_id[sid] for sid in assignment.fold_ids(f)]
        for f in range(config.num_folds)
    }
    train_groups = {}
    for f in range(config.num_folds):
        test_set = set(assignment.fold_ids(f))
        groups: list[list[str]] = [[] for _ in range(num_classes)]
        for rec in manifest.slides:
            if rec.slide_id not in test_set:
                groups[labels[rec.slide_id]].append(rec.slide_id)
        train_groups[f] = groups

    def evaluate(predictions, fold) -> tuple[float, tuple[float, ...]]:
        y = [b.label for b in test_bags[fold]]
        score, recalls = balanced_accuracy(predictions, y, num_classes)
        return score, tuple(recalls)

    def fewshot_cell(fold: int, seed: int, k: int) -> list[EvalRecord]:
        draw = sample_few_shot(train_groups[fold], k, derive_seed(seed, "support", fold, k))
        support = [bags_by_id[sid] for sid in draw.support_ids]
        records = []
        if "visionshot" in fewshot_methods:
            for kt in config.top_k_grid:
                protos = build_prototypes(
                    support, classifier, kt, config.normalize_prototypes
                )
                preds = [predict_prototype(b, protos, "visionshot") for b in test_bags[fold]]
                score, recalls = evaluate(preds, fold)
                records.append(
                    EvalRecord("visionshot", fold, seed, k, kt, None, score, recalls)
                )
        if "simpleshot" in fewshot_methods:
            protos = simpleshot_prototypes(
                support,
                config.normalize_prototypes,
                num_classes=num_classes,
                class_names=manifest.classes,
            )
            preds = [predict_prototype(b, protos, "simpleshot") for b in test_bags[fold]]
            score, recalls = evaluate(preds, fold)
            records.append(
                EvalRecord("simpleshot", fold, seed, k, None, None, score, recalls)
            )
        if "tipadapter" in fewshot_methods:
            cache = build_cache(support, num_classes, config.tip_alpha, config.tip_beta)
            preds = [tip_adapter_predict(b, cache, classifier) for b in test_bags[fold]]
            score, recalls = evaluate(preds, fold)
            records.append(
                EvalRecord("tipadapter", fold, seed, k, None, None, score, recalls)
            )
        return records

    def mizero_cell(fold: int) -> list[EvalRecord]:
        records = []
        for prompt in range(classifier.num_prompts):
            preds = [mizero_predict(b, classifier, prompt) for b in test_bags[fold]]
            score, recalls = evaluate(preds, fold)
            records.append(
                EvalRecord("mizero", fold, None, None, None, prompt, score, recalls)
            )
        return records

    tasks: list[tuple[str, Callable[[], list[EvalRecord]]]] = []
    for f in range(config.num_folds):
        if "mizero" in config.methods:
            tasks.append((f"method=mizero fold={f}", lambda f=f: mizero_cell(f)))
        if fewshot_methods:
            for seed in seeds:
                for k in config.k_grid:
                    tasks.append(
                        (
                            f"fold={f} seed={seed} k={k}",
                            lambda f=f, s=seed, k=k: fewshot_cell(f, s, k),
                        )
                    )

    records: list[EvalRecord] = []
    if threads <= 1:
        for cell, fn in tasks:
            try:
                records.extend(fn())
            except Exception as exc:
                raise GridCellError(cell, exc) from exc
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(cell, pool.submit(fn)) for cell, fn in tasks]
            for cell, fut in futures:
                try:
                    records.extend(fut.result())
                except Exception as exc:
                    raise GridCellError(cell, exc) from exc

    records.sort(key=_record_key)
    aggregates = aggregate_records(records)
    config_echo = {
        "methods": list(config.methods),
        "num_folds": config.num_folds,
        "k_grid": list(config.k_grid),
        "top_k_grid": list(config.top_k_grid),
        "seeds": list(seeds),
        "base_seed": config.base_seed,
        "fold_seed": fold_seed,
        "tip_alpha": config.tip_alpha,
        "tip_beta": config.tip_beta,
        "normalize_prototypes": config.normalize_prototypes,
        "num_classes": num_classes,
        "class_names": list(manifest.classes),
        "num_prompts": classifier.num_prompts,
        "prng": dict(PRNG_SPEC),
    }
    return EvalReport(config=config_echo, records=tuple(records), aggregates=aggregates)


# --- slide embedding tables and 2-D projection ----------------------------------------


@dataclass(frozen=True)
class EmbeddingTable:
    slide_ids: tuple[str, ...]
    labels: tuple[int, ...]
    embeddings: np.ndarray
    projection: np.ndarray


def slide_embedding_table(
    bags: Sequence[SlideBag],
    mode: str,
    classifier: TextClassifier | None = None,
    k: int | None = None,
) -> tuple[np.ndarray, list[int], list[str]]:
    """One embedding row per slide.

    mode "bgap" pools every patch; mode "visionshot" pools the top-k patches
    against each slide's own class text vector (so bags must be labeled and
    `classifier` and `k` given).
    """
    if mode not in ("bgap", "visionshot"):
        raise ValueError(f"unknown mode {mode!r}")
    rows = []
    labels = []
    ids = []
    if mode == "visionshot":
        if classifier is None or k is None:
            raise ValueError("visionshot mode needs a classifier and k")
        canonical = classifier.canonical_vectors()
    for bag in bags:
        if bag.label is None:
            raise ValueError(f"slide {bag.slide_id!r} has no label")
        if mode == "bgap":
            rows.append(bgap(bag.patches))
        else:
            rows.append(visionshot_slide_embedding(bag, canonical[bag.label], k))
        labels.append(bag.label)
        ids.append(bag.slide_id)
    return np.stack(rows), labels, ids


def pca_2d(points: np.ndarray) -> np.ndarray:
    """Project onto the top-2 principal components.

    Covariance eigendecomposition on centered data; each component's sign is
    fixed so its largest-magnitude loading is positive.

    Raises:
        TooFewPoints: fewer than 2 points.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise TooFewPoints(pts.shape[0] if pts.ndim == 2 else 0)
    centered = pts - pts.mean(axis=0)
    cov = (centered.T @ centered) / (pts.shape[0] - 1)
    _, vectors = np.linalg.eigh(cov)
    components = vectors[:, ::-1][:, :2].T  # top-2, largest eigenvalue first
    for i in range(components.shape[0]):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return centered @ components.T


def export_embedding_table(
    bags: Sequence[SlideBag],
    mode: str,
    classifier: TextClassifier | None = None,
    k: int | None = None,
) -> EmbeddingTable:
    """Slide embeddings plus their 2-D projection, ready for plotting."""
    embeddings, labels, ids = slide_embedding_table(bags, mode, classifier, k)
    projection = pca_2d(embeddings)
    return EmbeddingTable(
        slide_ids=tuple(ids),
        labels=tuple(labels),
        embeddings=embeddings,
        projection=projection,
    )


def projection_csv(table: EmbeddingTable) -> str:
    lines = ["slide_id,label,pc1,pc2"]
    for sid, label, (pc1, pc2) in zip(table.slide_ids, table.labels, table.projection):
        lines.append(f"{sid},{label},{format(pc1, '.6g')},{format(pc2, '.6g')}")
    return "\n".join(lines) + "\n"
