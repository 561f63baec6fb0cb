"""Exception types raised across the toolkit.

Every error carries its distinguishing values as attributes so callers can
react programmatically instead of parsing messages.
"""

from __future__ import annotations


class ProtoshotError(Exception):
    """Base class for all toolkit errors."""


# --- embedding matrices and stores ---------------------------------------


class ZeroVectorRow(ProtoshotError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has near-zero L2 norm and cannot be normalized")
        self.row = row


class NonFiniteValue(ProtoshotError):
    def __init__(self, row: int):
        super().__init__(f"row {row} contains NaN or infinity")
        self.row = row


class UnnormalizedRow(ProtoshotError):
    def __init__(self, slide_id: str, row: int, norm: float):
        super().__init__(
            f"slide {slide_id!r} row {row} has L2 norm {norm:.6g}, expected 1.0; "
            "pass renormalize=True to fix at load"
        )
        self.slide_id = slide_id
        self.row = row
        self.norm = norm


class IoFailure(ProtoshotError):
    pass


class BadMagic(ProtoshotError):
    def __init__(self, found: bytes):
        super().__init__(f"bad magic bytes {found!r}, not an embedding file")
        self.found = found


class TruncatedPayload(ProtoshotError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"payload truncated: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual


class DimensionZero(ProtoshotError):
    def __init__(self, rows: int, dim: int):
        super().__init__(f"header declares zero extent (rows={rows}, dim={dim})")
        self.rows = rows
        self.dim = dim


class UnknownClass(ProtoshotError):
    def __init__(self, slide_id: str, class_name: str):
        super().__init__(f"slide {slide_id!r} has class {class_name!r} not in the manifest classes")
        self.slide_id = slide_id
        self.class_name = class_name


class PatchCountMismatch(ProtoshotError):
    def __init__(self, slide_id: str, declared: int, actual: int):
        super().__init__(
            f"slide {slide_id!r} declares {declared} patches but its file holds {actual}"
        )
        self.slide_id = slide_id
        self.declared = declared
        self.actual = actual


class MissingFile(ProtoshotError):
    def __init__(self, path: str):
        super().__init__(f"embedding file not found: {path}")
        self.path = path


# --- similarity kernels ----------------------------------------------------


class DimensionMismatch(ProtoshotError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"dimension mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class EmptySubset(ProtoshotError):
    def __init__(self) -> None:
        super().__init__("cannot pool an empty patch subset")


# --- classification methods --------------------------------------------------


class EmptyClassSupport(ProtoshotError):
    def __init__(self, class_name: str):
        super().__init__(f"class {class_name!r} has no support slides")
        self.class_name = class_name


class PromptIndexOutOfRange(ProtoshotError):
    def __init__(self, index: int, num_prompts: int):
        super().__init__(f"prompt index {index} out of range for {num_prompts} prompts")
        self.index = index
        self.num_prompts = num_prompts


class EmptyCache(ProtoshotError):
    def __init__(self) -> None:
        super().__init__("cache model holds no support entries")


# --- evaluation protocol -----------------------------------------------------


class ClassTooSmall(ProtoshotError):
    def __init__(self, class_index: int, count: int, num_folds: int):
        super().__init__(
            f"class {class_index} has {count} slides, fewer than {num_folds} folds"
        )
        self.class_index = class_index
        self.count = count
        self.num_folds = num_folds


class InsufficientSupport(ProtoshotError):
    def __init__(self, class_index: int, available: int, requested: int):
        super().__init__(
            f"class {class_index} has {available} training slides, cannot draw {requested}"
        )
        self.class_index = class_index
        self.available = available
        self.requested = requested


class LengthMismatch(ProtoshotError):
    def __init__(self, predictions: int, labels: int):
        super().__init__(f"{predictions} predictions vs {labels} labels")
        self.predictions = predictions
        self.labels = labels


class ClassAbsent(ProtoshotError):
    def __init__(self, class_index: int):
        super().__init__(f"class {class_index} has no members among the labels")
        self.class_index = class_index


class SingleCluster(ProtoshotError):
    def __init__(self) -> None:
        super().__init__("silhouette needs at least two distinct cluster labels")


class TooFewPoints(ProtoshotError):
    def __init__(self, count: int):
        super().__init__(f"need at least 2 points, got {count}")
        self.count = count


class GridCellError(ProtoshotError):
    def __init__(self, cell: str, cause: BaseException):
        super().__init__(f"grid cell [{cell}] failed: {cause}")
        self.cell = cell
        self.cause = cause


# --- synthetic data -----------------------------------------------------------


class InvalidConfig(ProtoshotError):
    pass
