"""Shared fixture: a small deterministic WAV corpus with its audio manifest."""

import json
import wave
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

SAMPLE_RATE = 16000

SPEAKERS = (
    ("n01", "North", "train", 105.0),
    ("n02", "North", "test", 125.0),
    ("s01", "South", "train", 145.0),
    ("s02", "South", "test", 165.0),
)

TEXTS = ("the quick brown fox", "jumps over a lazy dog", "near the old stone bridge")


def write_wav(path: Path, samples: np.ndarray, rate: int = SAMPLE_RATE) -> None:
    pcm = np.round(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(rate)
        handle.writeframes(pcm.tobytes())


def _signal(f0: float, accent: str, index: int, seed: int, rate: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    duration = 0.3 + 0.07 * index
    t = np.arange(int(duration * rate)) / rate
    # crude vowel-ish source: harmonics with an accent-dependent tilt
    tilt = -0.5 if accent == "North" else 0.5
    out = np.zeros_like(t)
    for h in range(1, 9):
        out += (h ** tilt) * np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi))
    out += 0.01 * rng.standard_normal(t.size)
    return 0.3 * out / np.abs(out).max()


@dataclass(frozen=True)
class WavCorpus:
    root: Path
    manifest_path: Path
    records: tuple  # raw manifest dicts

    @property
    def utt_ids(self):
        return tuple(r["utt_id"] for r in self.records)


def build_wav_corpus(root: Path) -> WavCorpus:
    audio_dir = root / "audio"
    audio_dir.mkdir(parents=True)
    records = []
    for spk, accent, split, f0 in SPEAKERS:
        for index, text in enumerate(TEXTS):
            utt_id = f"{spk}_{index:03d}"
            wav = audio_dir / f"{utt_id}.wav"
            write_wav(wav, _signal(f0, accent, index, seed=zlib.crc32(utt_id.encode()), rate=SAMPLE_RATE))
            records.append(
                {
                    "utt_id": utt_id,
                    "speaker_id": spk,
                    "accent_region": accent,
                    "split": split,
                    "text": text,
                    "audio_path": f"audio/{utt_id}.wav",
                    "utterance_index": index,
                }
            )
    manifest = root / "audio_manifest.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in records))
    return WavCorpus(root=root, manifest_path=manifest, records=tuple(records))


@pytest.fixture(scope="session")
def wav_corpus(tmp_path_factory):
    return build_wav_corpus(tmp_path_factory.mktemp("wavs"))
