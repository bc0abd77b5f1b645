"""Deterministic analysis backends that stand in for neural encoders.

The export pipeline cares about formats, determinism, and failure
handling, not representation quality, so the bundled models are cheap
signal-processing stacks: framed log band energies pushed through fixed
per-layer rotations. Heavyweight encoders can be added by registering a
ModelSpec whose functions wrap the real inference code; everything
downstream of the registry treats models uniformly.

All outputs are reproducible bit for bit from the audio alone: random
projections derive from the model name and layer, never from global
state.
"""

import hashlib
import math
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from accenteval.errors import ConfigError, DataError

# Layer choice for models that expose only their final output.
OUTPUT_LAYER = "utterance"

_BANDS = 32


def _stable_seed(*parts) -> np.random.Generator:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


@dataclass(frozen=True)
class ModelSpec:
    """One registered backend and the layer domain it accepts."""

    name: str
    kind: str  # frame | utterance | ppg | asr
    dim: int | None = None
    layers: int | None = None  # depth for frame encoders
    window_s: float = 0.025
    stride_s: float = 0.020

    def validate_layer(self, layer) -> None:
        if self.kind == "frame":
            if not isinstance(layer, int) or isinstance(layer, bool):
                raise ConfigError(
                    f"model {self.name!r} needs an integer layer in 1..{self.layers}, got {layer!r}"
                )
            if not 1 <= layer <= self.layers:
                raise ConfigError(
                    f"layer {layer} out of range for {self.name!r} (1..{self.layers})"
                )
        elif layer != OUTPUT_LAYER:
            raise ConfigError(
                f"model {self.name!r} has no selectable layers; use layer={OUTPUT_LAYER!r}"
            )


_REGISTRY = {
    spec.name: spec
    for spec in (
        ModelSpec(name="fbank-24", kind="frame", dim=_BANDS, layers=24),
        ModelSpec(name="fbank-accent", kind="utterance", dim=32),
        ModelSpec(name="fbank-sv", kind="utterance", dim=64),
        ModelSpec(name="fbank-ppg", kind="ppg", dim=16),
        ModelSpec(name="oracle-asr", kind="asr"),
    )
}


def available_models() -> tuple:
    return tuple(sorted(_REGISTRY))


def model_spec(name: str) -> ModelSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; available: {', '.join(available_models())}"
        ) from None


# ---------------------------------------------------------------------------
# Audio


def read_wav(path: str | Path) -> tuple:
    """Decode a mono 16-bit PCM WAV file to float samples in [-1, 1].

    Returns (samples, sample_rate_hz).

    Raises:
        DataError: unreadable file or an unsupported encoding.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            rate = handle.getframerate()
            count = handle.getnframes()
            raw = handle.readframes(count)
    except (OSError, wave.Error) as exc:
        raise DataError(f"{path}: cannot read WAV ({exc})") from None
    if channels != 1:
        raise DataError(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise DataError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if count == 0:
        raise DataError(f"{path}: empty audio")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def _frame(samples: np.ndarray, rate: int, spec: ModelSpec) -> tuple:
    """Slice audio into overlapping analysis windows.

    Returns (windows, frame_rate_hz). The frame rate is derived from the
    realized hop, so it is recorded per file rather than assumed.
    """
    hop = max(1, round(rate * spec.stride_s))
    win = max(hop, round(rate * spec.window_s))
    if samples.size < win:
        samples = np.pad(samples, (0, win - samples.size))
    count = 1 + (samples.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(count)[:, None]
    windows = samples[idx] * np.hanning(win)[None, :]
    return windows, rate / hop


def _band_energies(windows: np.ndarray) -> np.ndarray:
    """Log power in _BANDS contiguous spectral bands per window."""
    power = np.abs(np.fft.rfft(windows, axis=1)) ** 2
    bins = power.shape[1]
    edges = np.linspace(0, bins, _BANDS + 1).astype(int)
    bands = np.empty((windows.shape[0], _BANDS))
    for b in range(_BANDS):
        lo, hi = edges[b], max(edges[b] + 1, edges[b + 1])
        bands[:, b] = power[:, lo:hi].mean(axis=1)
    return np.log10(bands + 1e-10)


@lru_cache(maxsize=64)
def _rotation(model: str, layer, dim_in: int, dim_out: int) -> np.ndarray:
    rng = _stable_seed("rotation", model, layer)
    q, _ = np.linalg.qr(rng.normal(size=(max(dim_in, dim_out), max(dim_in, dim_out))))
    return np.ascontiguousarray(q[:dim_in, :dim_out])


def _standardize(bands: np.ndarray) -> np.ndarray:
    mean = bands.mean(axis=0, keepdims=True)
    std = bands.std(axis=0, keepdims=True)
    return (bands - mean) / np.maximum(std, 1e-6)


# ---------------------------------------------------------------------------
# Per-kind extraction


def frame_features(spec: ModelSpec, layer: int, samples: np.ndarray, rate: int) -> tuple:
    """(T, dim) float32 features for one encoder layer, plus the frame rate."""
    windows, frame_rate = _frame(samples, rate, spec)
    z = _standardize(_band_energies(windows))
    out = np.tanh(z @ _rotation(spec.name, layer, _BANDS, spec.dim) / math.sqrt(_BANDS))
    return out.astype(np.float32), frame_rate


def utterance_embedding(spec: ModelSpec, samples: np.ndarray, rate: int) -> np.ndarray:
    """One L2-normalized float32 vector per utterance (mean+std pooling)."""
    windows, _ = _frame(samples, rate, spec)
    bands = _band_energies(windows)
    pooled = np.concatenate([bands.mean(axis=0), bands.std(axis=0)])
    vec = pooled @ _rotation(spec.name, OUTPUT_LAYER, pooled.size, spec.dim)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise DataError("degenerate audio produced a zero embedding")
    return (vec / norm).astype(np.float32)


def ppg_rows(spec: ModelSpec, samples: np.ndarray, rate: int) -> tuple:
    """(T, classes) float32 posterior rows, renormalized before writing."""
    windows, frame_rate = _frame(samples, rate, spec)
    z = _standardize(_band_energies(windows))
    logits = z @ _rotation(spec.name, OUTPUT_LAYER, _BANDS, spec.dim)
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.astype(np.float32), frame_rate


def transcribe(spec: ModelSpec, text: str) -> str:
    """The bundled ASR is an oracle passthrough for pipeline dry runs."""
    if spec.kind != "asr":
        raise ConfigError(f"model {spec.name!r} is not a transcription model")
    return text
