"""Exporter producing the accenteval toolkit's interchange files from audio.

Four jobs: per-layer frame features (FTR plus a filled-in corpus
manifest), utterance-level accent or speaker embeddings (JSON Lines),
posteriorgrams (FTR), and transcription hypotheses (JSON Lines). The
bundled backends are deterministic signal-analysis stacks; real encoders
slot into the same registry.
"""

from .jobs import (
    EMBEDDING_KINDS,
    AudioRecord,
    ExportJob,
    ExportReport,
    export_asr_hypotheses,
    export_embeddings,
    export_layer_features,
    export_ppgs,
    load_audio_manifest,
)
from .models import OUTPUT_LAYER, ModelSpec, available_models, model_spec, read_wav

__version__ = "0.1.0"

__all__ = [
    "EMBEDDING_KINDS",
    "OUTPUT_LAYER",
    "AudioRecord",
    "ExportJob",
    "ExportReport",
    "ModelSpec",
    "available_models",
    "export_asr_hypotheses",
    "export_embeddings",
    "export_layer_features",
    "export_ppgs",
    "load_audio_manifest",
    "model_spec",
    "read_wav",
]
