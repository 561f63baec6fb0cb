"""Training-free few-shot classification of slides represented as bags of
precomputed patch embeddings: text-guided prototypes, plain prototypes,
zero-shot text transfer, and cache blending, plus the stratified
cross-validation grid that compares them."""

from . import errors
from .adapters import (
    CacheModel,
    PrototypeSet,
    SlidePrediction,
    build_cache,
    build_prototypes,
    mizero_predict,
    predict_prototype,
    read_prototypes,
    simpleshot_prototypes,
    tip_adapter_predict,
    visionshot_slide_embedding,
    write_prototypes,
)
from .embedstore import (
    DatasetManifest,
    PatchMatrix,
    SlideBag,
    SlideRecord,
    TextClassifier,
    load_manifest,
    normalize,
    parse_manifest,
    read_embeddings,
    read_embeddings_file,
    read_text_classifier,
    write_dataset,
    write_embeddings,
    write_embeddings_file,
    write_manifest,
    write_text_classifier,
)
from .evalharness import (
    Aggregate,
    EmbeddingTable,
    EvalRecord,
    EvalReport,
    FewShotDraw,
    FoldAssignment,
    GridConfig,
    balanced_accuracy,
    derive_seed,
    export_embedding_table,
    pca_2d,
    projection_csv,
    run_grid,
    sample_few_shot,
    silhouette,
    slide_embedding_table,
    stratified_kfold,
)
from .simsel import SelectionResult, bgap, score_against, top_k
from .synthgen import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Aggregate",
    "CacheModel",
    "DatasetManifest",
    "EmbeddingTable",
    "EvalRecord",
    "EvalReport",
    "FewShotDraw",
    "FoldAssignment",
    "GridConfig",
    "PatchMatrix",
    "PrototypeSet",
    "SelectionResult",
    "SlideBag",
    "SlidePrediction",
    "SlideRecord",
    "SynthConfig",
    "TextClassifier",
    "balanced_accuracy",
    "bgap",
    "build_cache",
    "build_prototypes",
    "derive_seed",
    "errors",
    "export_embedding_table",
    "generate",
    "load_manifest",
    "mizero_predict",
    "normalize",
    "parse_manifest",
    "pca_2d",
    "predict_prototype",
    "projection_csv",
    "read_embeddings",
    "read_embeddings_file",
    "read_prototypes",
    "read_text_classifier",
    "run_grid",
    "sample_few_shot",
    "score_against",
    "silhouette",
    "simpleshot_prototypes",
    "slide_embedding_table",
    "stratified_kfold",
    "tip_adapter_predict",
    "top_k",
    "visionshot_slide_embedding",
    "write_dataset",
    "write_embeddings",
    "write_embeddings_file",
    "write_manifest",
    "write_prototypes",
    "write_text_classifier",
]
