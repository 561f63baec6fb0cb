"""The four slide-level classification methods.

All of them are training-free and operate purely on precomputed embeddings:

* text-guided prototypes ("visionshot"): score each support slide's patches
  against its own class text vector, pool the top-K, average per class;
* plain prototypes ("simpleshot"): pool every patch of every support slide,
  average per class;
* zero-shot ("mizero"): compare the pooled slide embedding against the text
  classifier directly, one prediction per prompt;
* cache blending ("tipadapter"): blend a key/value cache of support slide
  embeddings with the zero-shot text scores.

Prediction always pools the full bag: at inference time the class is
unknown, so no text-guided patch selection is possible. Argmax ties resolve
to the lowest class index everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embedstore import (
    PatchMatrix,
    SlideBag,
    TextClassifier,
    read_embeddings_file,
    write_embeddings_file,
)
from .errors import (
    DimensionMismatch,
    EmptyCache,
    EmptyClassSupport,
    MissingFile,
    PromptIndexOutOfRange,
    ZeroVectorRow,
)
from .simsel import bgap, score_against, top_k

_NORM_ATOL = 1e-6


@dataclass(frozen=True)
class PrototypeSet:
    """One prototype vector per class, with provenance of how it was built.

    ``top_k`` is the per-slide patch selection size used during
    construction, or None when every patch was pooled. ``support`` maps each
    class name to the slide ids averaged into its prototype.
    """

    class_names: tuple[str, ...]
    prototypes: np.ndarray
    normalized: bool
    top_k: int | None = None
    support: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.class_names)
        arr = np.ascontiguousarray(self.prototypes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(names):
            raise ValueError(
                f"expected one prototype per class ({len(names)}), got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("prototypes contain NaN or infinity")
        if self.normalized:
            norms = np.sqrt(np.einsum("ij,ij->i", arr, arr))
            if np.abs(norms - 1.0).max() > _NORM_ATOL:
                raise ValueError("normalized flag set but rows are not unit norm")
        arr.flags.writeable = False
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "prototypes", arr)
        object.__setattr__(self, "support", dict(self.support))

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]


@dataclass(frozen=True)
class SlidePrediction:
    slide_id: str
    class_scores: np.ndarray
    predicted: int
    method: str

    def __post_init__(self):
        scores = np.ascontiguousarray(self.class_scores, dtype=np.float64)
        scores.flags.writeable = False
        object.__setattr__(self, "class_scores", scores)


@dataclass(frozen=True)
class CacheModel:
    """Key/value store of support slide embeddings and one-hot labels.

    ``alpha`` weights the cache term against the zero-shot text term and
    ``beta`` sharpens the affinity kernel.
    """

    keys: np.ndarray
    values: np.ndarray
    alpha: float = 1.0
    beta: float = 5.5

    def __post_init__(self):
        keys = np.ascontiguousarray(self.keys, dtype=np.float64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if keys.ndim != 2 or keys.shape[0] == 0:
            raise EmptyCache()
        if values.ndim != 2 or values.shape[0] != keys.shape[0]:
            raise ValueError("values must be an M x C matrix")
        one = values == 1.0
        if not ((values == 0.0) | one).all() or not (one.sum(axis=1) == 1).all():
            raise ValueError("values rows must be one-hot")
        norms = np.sqrt(np.einsum("ij,ij->i", keys, keys))
        if np.abs(norms - 1.0).max() > _NORM_ATOL:
            raise ValueError("cache keys must be unit norm")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        keys.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.keys.shape[0]


def _argmax_lowest(scores: np.ndarray) -> int:
    # np.argmax returns the first maximum, which is the lowest-index tie rule
    return int(np.argmax(scores))


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = float(np.sqrt(vector @ vector))
    if norm < 1e-12:
        raise ZeroVectorRow(0)
    return vector / norm


def visionshot_slide_embedding(bag: SlideBag, class_vector: np.ndarray, k: int) -> np.ndarray:
    """Pool the k patches most similar to `class_vector` into one embedding.

    Meant for support slides, with `class_vector` the text embedding of the
    slide's own class; k above the bag size clamps to pooling everything.
    """
    scores = score_against(bag.patches, class_vector)
    selection = top_k(scores, k)
    return bgap(bag.patches, selection.indices)


def _group_by_label(
    support: Sequence[SlideBag], num_classes: int, class_names: Sequence[str]
) -> list[list[SlideBag]]:
    groups: list[list[SlideBag]] = [[] for _ in range(num_classes)]
    for bag in support:
        if bag.label is None:
            raise ValueError(f"support slide {bag.slide_id!r} has no label")
        if bag.label >= num_classes:
            raise ValueError(
                f"support slide {bag.slide_id!r} has label {bag.label}, "
                f"but there are {num_classes} classes"
            )
        groups[bag.label].append(bag)
    for c, group in enumerate(groups):
        if not group:
            raise EmptyClassSupport(str(class_names[c]))
    return groups


def _finalize_prototypes(
    per_class: list[list[np.ndarray]],
    class_names: Sequence[str],
    support_ids: list[list[str]],
    top_k_used: int | None,
    normalize_prototypes: bool,
) -> PrototypeSet:
    # one shared reduction so the k >= bag-size case is bit-identical to
    # full-bag pooling
    rows = np.stack([np.mean(np.stack(embs), axis=0) for embs in per_class])
    if normalize_prototypes:
        norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
        small = np.flatnonzero(norms < 1e-12)
        if small.size:
            raise ZeroVectorRow(int(small[0]))
        rows = rows / norms[:, None]
    support = {str(class_names[c]): tuple(ids) for c, ids in enumerate(support_ids)}
    return PrototypeSet(
        class_names=tuple(str(n) for n in class_names),
        prototypes=rows,
        normalized=normalize_prototypes,
        top_k=top_k_used,
        support=support,
    )


def build_prototypes(
    support: Sequence[SlideBag],
    classifier: TextClassifier,
    k: int,
    normalize_prototypes: bool = True,
) -> PrototypeSet:
    """Build text-guided class prototypes from labeled support slides.

    Each support slide is pooled over the k patches most similar to its own
    class's canonical text vector, and each class prototype is the mean of
    its slides' pooled embeddings (re-normalized by default).

    Raises:
        EmptyClassSupport: some class has no support slide.
    """
    canonical = classifier.canonical_vectors()
    groups = _group_by_label(support, classifier.num_classes, classifier.class_names)
    per_class = [
        [visionshot_slide_embedding(bag, canonical[c], k) for bag in group]
        for c, group in enumerate(groups)
    ]
    ids = [[bag.slide_id for bag in group] for group in groups]
    return _finalize_prototypes(
        per_class, classifier.class_names, ids, k, normalize_prototypes
    )


def simpleshot_prototypes(
    support: Sequence[SlideBag],
    normalize_prototypes: bool = True,
    *,
    num_classes: int | None = None,
    class_names: Sequence[str] | None = None,
) -> PrototypeSet:
    """Build plain class prototypes: full-bag pooling, no text guidance.

    `num_classes` defaults to max(label)+1 and `class_names` to generated
    names; pass both when the corpus knows better.
    """
    labels = [bag.label for bag in support if bag.label is not None]
    if num_classes is None:
        num_classes = (max(labels) + 1) if labels else 0
    if class_names is None:
        class_names = [f"class_{c}" for c in range(num_classes)]
    groups = _group_by_label(support, num_classes, class_names)
    per_class = [[bgap(bag.patches) for bag in group] for group in groups]
    ids = [[bag.slide_id for bag in group] for group in groups]
    return _finalize_prototypes(per_class, class_names, ids, None, normalize_prototypes)


def predict_prototype(
    bag: SlideBag, prototypes: PrototypeSet, method: str = "prototype"
) -> SlidePrediction:
    """Nearest-prototype prediction from the full-bag pooled embedding.

    The bag's label is never consulted. Scores are prototype-row dot
    products with the pooled embedding; no re-normalization of the pooled
    embedding is needed because positive scaling cannot change the argmax.
    """
    if bag.patches.dim != prototypes.dim:
        raise DimensionMismatch(prototypes.dim, bag.patches.dim)
    pooled = bgap(bag.patches)
    scores = prototypes.prototypes @ pooled
    return SlidePrediction(bag.slide_id, scores, _argmax_lowest(scores), method)


def mizero_predict(
    bag: SlideBag, classifier: TextClassifier, prompt_index: int = 0
) -> SlidePrediction:
    """Zero-shot prediction with one prompt's classifier.

    The per-class score is the mean over patches of the patch-text dot
    product, computed as the pooled embedding dotted with the class vector
    (the two are equal by linearity).
    """
    if not 0 <= prompt_index < classifier.num_prompts:
        raise PromptIndexOutOfRange(prompt_index, classifier.num_prompts)
    if bag.patches.dim != classifier.dim:
        raise DimensionMismatch(classifier.dim, bag.patches.dim)
    pooled = bgap(bag.patches)
    scores = classifier.weights[prompt_index].astype(np.float64) @ pooled
    return SlidePrediction(bag.slide_id, scores, _argmax_lowest(scores), "mizero")


def build_cache(
    support: Sequence[SlideBag],
    num_classes: int,
    alpha: float = 1.0,
    beta: float = 5.5,
) -> CacheModel:
    """Cache keys are unit-normalized full-bag embeddings of the support slides."""
    if not support:
        raise EmptyCache()
    keys = np.stack([_unit(bgap(bag.patches)) for bag in support])
    values = np.zeros((len(support), num_classes))
    for m, bag in enumerate(support):
        if bag.label is None:
            raise ValueError(f"support slide {bag.slide_id!r} has no label")
        values[m, bag.label] = 1.0
    return CacheModel(keys=keys, values=values, alpha=alpha, beta=beta)


def tip_adapter_predict(
    bag: SlideBag, cache: CacheModel, classifier: TextClassifier
) -> SlidePrediction:
    """Blend cache affinities with zero-shot text scores.

    With query q (unit-normalized pooled embedding), the score of class c is

        alpha * sum_m exp(-beta * (1 - q . key_m)) * values[m, c]
        + q . canonical_text_vector_c

    With alpha = 0 this reduces exactly to the zero-shot text argmax.
    """
    if bag.patches.dim != cache.keys.shape[1]:
        raise DimensionMismatch(cache.keys.shape[1], bag.patches.dim)
    if classifier.dim != cache.keys.shape[1]:
        raise DimensionMismatch(cache.keys.shape[1], classifier.dim)
    query = _unit(bgap(bag.patches))
    affinity = np.exp(-cache.beta * (1.0 - cache.keys @ query))
    scores = cache.alpha * (affinity @ cache.values) + classifier.canonical_vectors() @ query
    return SlidePrediction(bag.slide_id, scores, _argmax_lowest(scores), "tipadapter")


# --- persistence ------------------------------------------------------------------


def write_prototypes(prototypes: PrototypeSet, path: str | Path) -> None:
    """Persist prototypes as embedding binary (C rows, float32) + JSON sidecar."""
    path = Path(path)
    write_embeddings_file(PatchMatrix(prototypes.prototypes.astype(np.float32)), path)
    sidecar = {
        "class_names": list(prototypes.class_names),
        "top_k": prototypes.top_k,
        "normalized": prototypes.normalized,
        "support": {name: list(ids) for name, ids in prototypes.support.items()},
    }
    sidecar_path = path.with_name(path.name + ".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def read_prototypes(path: str | Path) -> PrototypeSet:
    path = Path(path)
    sidecar_path = path.with_name(path.name + ".json")
    if not sidecar_path.is_file():
        raise MissingFile(str(sidecar_path))
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    matrix = read_embeddings_file(path)
    names = tuple(str(n) for n in sidecar["class_names"])
    if matrix.rows != len(names):
        raise ValueError(
            f"prototype file holds {matrix.rows} rows for {len(names)} classes"
        )
    top_k_used = sidecar.get("top_k")
    support = {
        str(name): tuple(str(s) for s in ids)
        for name, ids in sidecar.get("support", {}).items()
    }
    rows = matrix.values.astype(np.float64)
    normalized = bool(sidecar.get("normalized", False))
    if normalized:
        # float32 storage loosens unit norms; restore them exactly
        norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
        rows = rows / norms[:, None]
    return PrototypeSet(
        class_names=names,
        prototypes=rows,
        normalized=normalized,
        top_k=None if top_k_used is None else int(top_k_used),
        support=support,
    )
