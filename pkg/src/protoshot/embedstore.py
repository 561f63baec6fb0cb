"""Core data model, L2 normalization, and the on-disk embedding formats.

A corpus is a set of "slides", each slide a bag of patch feature vectors
produced upstream by some external encoder. Everything downstream operates on
these precomputed vectors; no encoder ever runs here.

Embedding file (binary, little-endian):

    bytes 0-3    magic ``PSE1``
    bytes 4-7    uint32 N, number of rows
    bytes 8-11   uint32 D, embedding dimension
    bytes 12-15  reserved, zero
    then         N*D float32 values, row-major

Manifest (UTF-8 JSON lines): the first line is ``{"classes": [...]}``; each
following line is ``{"slide_id": str, "class": str, "path": str,
"num_patches": int}`` with ``path`` relative to the manifest root.

Text classifiers reuse the embedding binary with N = prompts * classes rows
(prompt-major) plus a JSON sidecar at ``<path>.json`` carrying
``{"num_classes", "num_prompts", "class_names"}``.

Values are stored at 32-bit precision; all reductions over them (norms,
means, dot products) accumulate in 64-bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimensionZero,
    IoFailure,
    MissingFile,
    NonFiniteValue,
    PatchCountMismatch,
    TruncatedPayload,
    UnknownClass,
    UnnormalizedRow,
    ZeroVectorRow,
)

MAGIC = b"PSE1"
HEADER_SIZE = 16

# Store-level tolerance on row norms at load; tighter tolerances apply to
# freshly normalized output (1e-6) and idempotence (1e-7 per element).
LOAD_NORM_ATOL = 1e-4
_MIN_ROW_NORM = 1e-8


def _adopt_float32(values) -> np.ndarray:
    """Return a read-only float32 C-order view or copy of `values`."""
    arr = np.asarray(values)
    if not (
        arr.dtype == np.float32
        and arr.flags["C_CONTIGUOUS"]
        and not arr.flags.writeable
    ):
        arr = np.array(arr, dtype=np.float32, order="C")
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PatchMatrix:
    """N x D matrix of 32-bit patch feature vectors, one row per patch.

    Rows are expected to be unit-norm in regular use (stores check this at
    load time), but the type itself only rejects non-finite values and
    degenerate shapes so that :func:`normalize` can accept raw input.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _adopt_float32(self.values)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
        n, d = arr.shape
        if n < 1:
            raise ValueError("a patch matrix needs at least one row")
        if d < 2:
            raise ValueError(f"embedding dimension must be >= 2, got {d}")
        bad_rows = np.flatnonzero(~np.isfinite(arr).all(axis=1))
        if bad_rows.size:
            raise NonFiniteValue(int(bad_rows[0]))
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row_norms(self) -> np.ndarray:
        """Per-row L2 norms, accumulated in float64."""
        v = self.values.astype(np.float64)
        return np.sqrt(np.einsum("ij,ij->i", v, v))


@dataclass(frozen=True)
class SlideBag:
    """One slide: an identifier, its patch matrix, and an optional label."""

    slide_id: str
    patches: PatchMatrix
    label: int | None = None

    def __post_init__(self):
        if not self.slide_id:
            raise ValueError("slide_id must be nonempty")
        if self.label is not None and self.label < 0:
            raise ValueError(f"label must be a class index >= 0, got {self.label}")


@dataclass(frozen=True)
class TextClassifier:
    """Unit-norm class text embeddings acting as a linear zero-shot classifier.

    `weights` has shape (prompts, classes, dim). Multi-prompt ensembles keep
    one full classifier per prompt; `canonical_vectors` collapses them into a
    single prompt-stable vector per class.
    """

    class_names: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        names = tuple(self.class_names)
        arr = _adopt_float32(self.weights)
        if arr.ndim != 3:
            raise ValueError(f"expected weights of shape (P, C, D), got {arr.shape}")
        p, c, d = arr.shape
        if p < 1 or c < 2 or d < 2:
            raise ValueError(f"invalid classifier shape (P={p}, C={c}, D={d})")
        if len(names) != c:
            raise ValueError(f"{len(names)} class names for {c} classes")
        flat = arr.reshape(p * c, d).astype(np.float64)
        norms = np.sqrt(np.einsum("ij,ij->i", flat, flat))
        off = np.flatnonzero(np.abs(norms - 1.0) > LOAD_NORM_ATOL)
        if off.size:
            row = int(off[0])
            raise UnnormalizedRow(f"classifier[{names[row % c]}]", row, float(norms[row]))
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "weights", arr)

    @property
    def num_prompts(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.weights.shape[2]

    def canonical_vectors(self) -> np.ndarray:
        """One unit vector per class: the re-normalized mean over prompts.

        Returns a float64 (classes, dim) matrix. For a single-prompt
        classifier this is just that prompt's weights.
        """
        mean = self.weights.astype(np.float64).mean(axis=0)
        norms = np.sqrt(np.einsum("ij,ij->i", mean, mean))
        small = np.flatnonzero(norms < _MIN_ROW_NORM)
        if small.size:
            raise ZeroVectorRow(int(small[0]))
        return mean / norms[:, None]


@dataclass(frozen=True)
class SlideRecord:
    slide_id: str
    class_name: str
    path: str
    num_patches: int


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered corpus census: class names plus one record per slide."""

    classes: tuple[str, ...]
    slides: tuple[SlideRecord, ...]

    def __post_init__(self):
        classes = tuple(self.classes)
        slides = tuple(self.slides)
        if not classes:
            raise ValueError("manifest declares no classes")
        if len(set(classes)) != len(classes):
            raise ValueError("duplicate class names in manifest")
        seen: set[str] = set()
        for rec in slides:
            if not rec.slide_id:
                raise ValueError("manifest contains an empty slide_id")
            if rec.slide_id in seen:
                raise ValueError(f"duplicate slide_id {rec.slide_id!r} in manifest")
            seen.add(rec.slide_id)
            if rec.class_name not in classes:
                raise UnknownClass(rec.slide_id, rec.class_name)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "slides", slides)

    def class_index(self, name: str) -> int:
        return self.classes.index(name)


def normalize(matrix: PatchMatrix) -> PatchMatrix:
    """Divide every row by its L2 norm.

    Norms are computed in float64 and the result is stored back at float32,
    leaving row norms within 1e-6 of 1.0. Row order is preserved and the
    operation is idempotent to within float32 rounding.

    Raises:
        ZeroVectorRow: if any row has norm below 1e-8.
    """
    norms = matrix.row_norms()
    small = np.flatnonzero(norms < _MIN_ROW_NORM)
    if small.size:
        raise ZeroVectorRow(int(small[0]))
    scaled = matrix.values.astype(np.float64) / norms[:, None]
    return PatchMatrix(scaled.astype(np.float32))


def is_normalized(matrix: PatchMatrix, atol: float = LOAD_NORM_ATOL) -> bool:
    return bool(np.all(np.abs(matrix.row_norms() - 1.0) <= atol))


# --- binary embedding format ---------------------------------------------------


def write_embeddings(matrix: PatchMatrix, sink: BinaryIO) -> int:
    """Write `matrix` to a binary sink; returns bytes written (16 + 4*N*D)."""
    header = struct.pack("<4sIII", MAGIC, matrix.rows, matrix.dim, 0)
    payload = np.asarray(matrix.values, dtype="<f4").tobytes()
    try:
        sink.write(header)
        sink.write(payload)
    except OSError as exc:
        raise IoFailure(f"could not write embeddings: {exc}") from exc
    return HEADER_SIZE + len(payload)


def read_embeddings(source: BinaryIO) -> PatchMatrix:
    """Read one matrix from a binary source positioned at its header.

    Raises:
        BadMagic: the first four bytes are not the format magic.
        TruncatedPayload: header or payload shorter than declared.
        DimensionZero: header declares zero rows or zero dimension.
        NonFiniteValue: payload holds NaN or infinity.
    """
    header = source.read(HEADER_SIZE)
    if len(header) >= 4 and header[:4] != MAGIC:
        raise BadMagic(header[:4])
    if len(header) < HEADER_SIZE:
        raise TruncatedPayload(HEADER_SIZE, len(header))
    _, n, d, _reserved = struct.unpack("<4sIII", header)
    if n == 0 or d == 0:
        raise DimensionZero(n, d)
    expected = 4 * n * d
    payload = source.read(expected)
    if len(payload) != expected:
        raise TruncatedPayload(expected, len(payload))
    arr = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    return PatchMatrix(arr)


def write_embeddings_file(matrix: PatchMatrix, path: str | Path) -> int:
    path = Path(path)
    try:
        with path.open("wb") as fh:
            return write_embeddings(matrix, fh)
    except OSError as exc:
        raise IoFailure(f"could not write {path}: {exc}") from exc


def read_embeddings_file(path: str | Path) -> PatchMatrix:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    with path.open("rb") as fh:
        return read_embeddings(fh)


# --- text classifier persistence ---------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_text_classifier(classifier: TextClassifier, path: str | Path) -> None:
    """Persist a classifier as embedding binary (prompt-major rows) + sidecar."""
    path = Path(path)
    p, c, d = classifier.weights.shape
    flat = PatchMatrix(classifier.weights.reshape(p * c, d))
    write_embeddings_file(flat, path)
    sidecar = {
        "num_classes": c,
        "num_prompts": p,
        "class_names": list(classifier.class_names),
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def read_text_classifier(path: str | Path) -> TextClassifier:
    path = Path(path)
    sidecar_file = _sidecar_path(path)
    if not sidecar_file.is_file():
        raise MissingFile(str(sidecar_file))
    sidecar = json.loads(sidecar_file.read_text(encoding="utf-8"))
    num_classes = int(sidecar["num_classes"])
    num_prompts = int(sidecar["num_prompts"])
    names = tuple(str(n) for n in sidecar["class_names"])
    flat = read_embeddings_file(path)
    if flat.rows != num_prompts * num_classes:
        raise ValueError(
            f"classifier file holds {flat.rows} rows, sidecar declares "
            f"{num_prompts} prompts x {num_classes} classes"
        )
    weights = flat.values.reshape(num_prompts, num_classes, flat.dim)
    return TextClassifier(names, weights)


# --- manifest ingestion ---------------------------------------------------------


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [json.dumps({"classes": list(manifest.classes)})]
    for rec in manifest.slides:
        lines.append(
            json.dumps(
                {
                    "slide_id": rec.slide_id,
                    "class": rec.class_name,
                    "path": rec.path,
                    "num_patches": rec.num_patches,
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_manifest(path: str | Path) -> DatasetManifest:
    """Parse the JSON-lines manifest without touching embedding files."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"manifest {path} is empty")
    head = json.loads(lines[0])
    if "classes" not in head:
        raise ValueError(f"manifest {path} first line must carry a 'classes' list")
    records = []
    for ln in lines[1:]:
        row = json.loads(ln)
        records.append(
            SlideRecord(
                slide_id=str(row["slide_id"]),
                class_name=str(row["class"]),
                path=str(row["path"]),
                num_patches=int(row["num_patches"]),
            )
        )
    return DatasetManifest(tuple(str(c) for c in head["classes"]), tuple(records))


def load_manifest(
    path: str | Path,
    root: str | Path | None = None,
    *,
    renormalize: bool = False,
) -> tuple[DatasetManifest, list[SlideBag]]:
    """Load a manifest and every embedding file it references.

    Bags come back in manifest order with labels resolved positionally
    against the manifest's class list. Each file's header patch count is
    cross-checked against the manifest, and each row's unit norm is checked
    to within 1e-4 unless `renormalize` asks for re-normalization instead.

    Args:
        path: manifest file.
        root: directory that slide paths are relative to; defaults to the
            manifest's own directory.
        renormalize: re-normalize rows that fail the unit-norm check rather
            than rejecting them.

    Raises:
        UnknownClass, PatchCountMismatch, MissingFile, UnnormalizedRow.
    """
    path = Path(path)
    manifest = parse_manifest(path)
    base = Path(root) if root is not None else path.parent
    bags: list[SlideBag] = []
    for rec in manifest.slides:
        matrix = read_embeddings_file(base / rec.path)
        if matrix.rows != rec.num_patches:
            raise PatchCountMismatch(rec.slide_id, rec.num_patches, matrix.rows)
        if renormalize:
            matrix = normalize(matrix)
        else:
            norms = matrix.row_norms()
            off = np.flatnonzero(np.abs(norms - 1.0) > LOAD_NORM_ATOL)
            if off.size:
                row = int(off[0])
                raise UnnormalizedRow(rec.slide_id, row, float(norms[row]))
        bags.append(
            SlideBag(
                slide_id=rec.slide_id,
                patches=matrix,
                label=manifest.class_index(rec.class_name),
            )
        )
    return manifest, bags


def write_dataset(
    manifest: DatasetManifest,
    bags: Iterable[SlideBag],
    out_dir: str | Path,
    manifest_name: str = "manifest.jsonl",
) -> Path:
    """Write embedding files plus the manifest under `out_dir`; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_id = {rec.slide_id: rec for rec in manifest.slides}
    for bag in bags:
        rec = by_id[bag.slide_id]
        target = out / rec.path
        target.parent.mkdir(parents=True, exist_ok=True)
        write_embeddings_file(bag.patches, target)
    manifest_path = out / manifest_name
    write_manifest(manifest, manifest_path)
    return manifest_path


def labels_in_order(manifest: DatasetManifest) -> dict[str, int]:
    """slide_id -> class index, in manifest order."""
    return {rec.slide_id: manifest.class_index(rec.class_name) for rec in manifest.slides}


def group_ids_by_class(
    manifest: DatasetManifest, exclude: Sequence[str] | set[str] = ()
) -> list[list[str]]:
    """Per-class slide id lists in manifest order, skipping `exclude`."""
    skip = set(exclude)
    groups: list[list[str]] = [[] for _ in manifest.classes]
    for rec in manifest.slides:
        if rec.slide_id in skip:
            continue
        groups[manifest.class_index(rec.class_name)].append(rec.slide_id)
    return groups
