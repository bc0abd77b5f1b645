"""Accent-aware evaluation toolkit for speech representations.

The package covers four stages: corpus plumbing (manifests, feature files,
alignments), frame quantization (EMA k-means codebooks), ABX
discrimination tests with accent/speaker/phone condition schemas, and the
objective metric suite for cross-accent voice conversion outputs
(embedding similarity, aligned PPG divergence, WER, and bound anchors).
"""

from .abx import (
    AbxCell,
    AbxCondition,
    AbxReport,
    CombinationList,
    SamplingCaps,
    SegmentFeatureProvider,
    SegmentRef,
    Triplet,
    abx_error_rate,
    accent_abx_score,
    accent_condition,
    condition_from_name,
    dtw_distance,
    enumerate_triplets,
    frame_distance,
    phone_condition,
    score_triplet,
    select_accent_word_combinations,
    speaker_condition,
    verify_triplet_constraints,
)
from .corpus import (
    FeatureSequence,
    Manifest,
    PpgSequence,
    Segment,
    UtteranceRecord,
    ValidationReport,
    load_alignment_file,
    load_embeddings,
    load_manifest,
    load_ppg_file,
    load_segment_index,
    read_feature_file,
    slice_segment,
    tokenize_transcript,
    validate_manifest,
    write_feature_file,
    write_manifest,
)
from .errors import ConfigError, DataError
from .quantizer import (
    Codebook,
    TokenSequence,
    TrainConfig,
    load_codebook,
    quantize,
    save_codebook,
    tokens_to_onehot,
    tokens_to_vectors,
    train_codebook,
)
from .recoverability import (
    EvalPair,
    MetricInputs,
    MetricReport,
    PlanConfig,
    build_eval_plan,
    compute_bounds,
    corpus_word_error_rate,
    cosine_similarity,
    metric_report,
    ppg_js_distance,
    word_error_rate,
)

__version__ = "0.1.0"

__all__ = [
    "AbxCell",
    "AbxCondition",
    "AbxReport",
    "Codebook",
    "CombinationList",
    "ConfigError",
    "DataError",
    "EvalPair",
    "FeatureSequence",
    "Manifest",
    "MetricInputs",
    "MetricReport",
    "PlanConfig",
    "PpgSequence",
    "SamplingCaps",
    "Segment",
    "SegmentFeatureProvider",
    "SegmentRef",
    "TokenSequence",
    "TrainConfig",
    "Triplet",
    "UtteranceRecord",
    "ValidationReport",
    "abx_error_rate",
    "accent_abx_score",
    "accent_condition",
    "build_eval_plan",
    "compute_bounds",
    "condition_from_name",
    "corpus_word_error_rate",
    "cosine_similarity",
    "dtw_distance",
    "enumerate_triplets",
    "frame_distance",
    "load_alignment_file",
    "load_codebook",
    "load_embeddings",
    "load_manifest",
    "load_ppg_file",
    "load_segment_index",
    "metric_report",
    "phone_condition",
    "ppg_js_distance",
    "quantize",
    "read_feature_file",
    "save_codebook",
    "score_triplet",
    "select_accent_word_combinations",
    "slice_segment",
    "speaker_condition",
    "tokenize_transcript",
    "tokens_to_onehot",
    "tokens_to_vectors",
    "train_codebook",
    "validate_manifest",
    "verify_triplet_constraints",
    "word_error_rate",
    "write_feature_file",
    "write_manifest",
]
