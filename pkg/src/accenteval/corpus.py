"""Corpus access: manifests, alignments, frame features, embeddings, posteriorgrams.

File formats
------------
Feature file (``.ftr``)
    Binary, little-endian: magic ``FTR1``, u32 frame count T, u32 feature
    dimension D, f32 frame rate in Hz, then T*D f32 values row-major.
    No trailing bytes are allowed.

Manifest
    JSON Lines, one utterance record per line. Field names match
    :class:`UtteranceRecord`. Unknown fields are ignored on load (the
    validator reports them).

Alignment file
    UTF-8 text, one ``start_s<TAB>end_s<TAB>label`` line per segment,
    sorted by start time. Word and phone tiers live in separate files.

Embeddings
    Either a JSON Lines sidecar with ``{"utt_id": ..., "vector": [...]}``
    records, or a directory of per-utterance feature files with T=1.
"""

import json
import logging
import math
import string
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

FTR_MAGIC = b"FTR1"
_FTR_HEADER = struct.Struct("<4sIIf")

SPLITS = ("train", "test")

# VCTK accent region labels; kept for reference and reporting, not enforced
# on load so synthetic or non-VCTK corpora stay usable.
ACCENT_REGIONS = (
    "AmericanMidwest",
    "AmericanNortheast",
    "AmericanSouth",
    "AmericanWest",
    "Canadian",
    "Indian",
    "Irish",
    "NorthernEnglish",
    "NorthernIrish",
    "Oceanian",
    "Scottish",
    "SouthAfrican",
    "SouthernEnglish",
)

# Each speaker's first utterances read a shared elicitation passage, so the
# same word by two speakers is the same sentence context. ABX pools skip
# them; content-matched conversion pairs rely on them.
SHARED_PROMPT_UTTERANCES = 24

# Context label used for phones with no neighbor on one side.
CONTEXT_BOUNDARY = "#"

# Slack, in frame units, absorbed when converting alignment times to frame
# indices so that products like 0.2 * 50 do not round across a boundary.
_FRAME_EPS = 1e-6


@dataclass(frozen=True)
class FeatureSequence:
    """A (T, D) float32 frame matrix with its frame rate."""

    frames: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise DataError(f"feature matrix must be 2-D and non-empty, got shape {frames.shape}")
        if not np.isfinite(frames).all():
            raise DataError("feature matrix contains non-finite values")
        rate = float(np.float32(self.frame_rate_hz))
        if not math.isfinite(rate) or rate <= 0:
            raise DataError(f"frame rate must be a positive finite number, got {self.frame_rate_hz}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate_hz", rate)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.frame_rate_hz


@dataclass(frozen=True)
class Segment:
    """A labelled time span inside one utterance.

    Phone segments carry the neighboring phone labels so context-matched
    pools can be built; word segments leave them as None.
    """

    utt_id: str
    label: str
    start_s: float
    end_s: float
    prev_label: str | None = None
    next_label: str | None = None

    def __post_init__(self):
        if not self.label:
            raise DataError(f"empty segment label in {self.utt_id!r}")
        if not (0.0 <= self.start_s < self.end_s):
            raise DataError(
                f"bad segment times [{self.start_s}, {self.end_s}) for "
                f"{self.label!r} in {self.utt_id!r}"
            )


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    speaker_id: str
    accent_region: str
    split: str
    text: str
    feature_path: str
    utterance_index: int
    word_alignment_path: str | None = None
    phone_alignment_path: str | None = None


_REQUIRED_FIELDS = (
    "utt_id",
    "speaker_id",
    "accent_region",
    "split",
    "text",
    "feature_path",
    "utterance_index",
)
_OPTIONAL_FIELDS = ("word_alignment_path", "phone_alignment_path")


@dataclass(frozen=True)
class Manifest:
    """Validated set of utterance records plus derived lookup maps.

    The derived maps are built from sorted views, so two manifests with the
    same records in different order produce equal maps.
    """

    records: tuple[UtteranceRecord, ...]
    base_dir: str | None = None
    by_utt_id: dict = field(init=False, repr=False, compare=False)
    speaker_accent: dict = field(init=False, repr=False, compare=False)
    speaker_split: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise DataError("empty manifest")
        by_utt: dict[str, UtteranceRecord] = {}
        speaker_accent: dict[str, str] = {}
        speaker_split: dict[str, str] = {}
        indices: dict[str, set[int]] = {}
        for rec in records:
            if rec.split not in SPLITS:
                raise DataError(f"utterance {rec.utt_id!r}: unknown split {rec.split!r}")
            if rec.utterance_index < 0:
                raise DataError(f"utterance {rec.utt_id!r}: negative utterance_index")
            if rec.utt_id in by_utt:
                raise DataError(f"duplicate utt_id {rec.utt_id!r}")
            by_utt[rec.utt_id] = rec
            seen_accent = speaker_accent.setdefault(rec.speaker_id, rec.accent_region)
            if seen_accent != rec.accent_region:
                raise DataError(
                    f"speaker {rec.speaker_id!r} appears with accents "
                    f"{seen_accent!r} and {rec.accent_region!r} (utterance {rec.utt_id!r})"
                )
            seen_split = speaker_split.setdefault(rec.speaker_id, rec.split)
            if seen_split != rec.split:
                raise DataError(
                    f"speaker {rec.speaker_id!r} appears in splits "
                    f"{seen_split!r} and {rec.split!r} (utterance {rec.utt_id!r})"
                )
            indices.setdefault(rec.speaker_id, set()).add(rec.utterance_index)
        for speaker in sorted(indices):
            got = indices[speaker]
            if got != set(range(len(got))):
                raise DataError(
                    f"speaker {speaker!r}: utterance_index values must be dense "
                    f"from 0, got {sorted(got)[:8]}..."
                )
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "by_utt_id", by_utt)
        object.__setattr__(self, "speaker_accent", dict(sorted(speaker_accent.items())))
        object.__setattr__(self, "speaker_split", dict(sorted(speaker_split.items())))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def speakers(self) -> list[str]:
        return sorted(self.speaker_accent)

    @property
    def accents(self) -> list[str]:
        return sorted(set(self.speaker_accent.values()))

    def record(self, utt_id: str) -> UtteranceRecord:
        try:
            return self.by_utt_id[utt_id]
        except KeyError:
            raise DataError(f"unknown utt_id {utt_id!r}") from None

    def utterance(self, speaker_id: str, utterance_index: int) -> UtteranceRecord:
        for rec in self.records:
            if rec.speaker_id == speaker_id and rec.utterance_index == utterance_index:
                return rec
        raise DataError(f"no utterance with index {utterance_index} for speaker {speaker_id!r}")

    def records_for_speaker(self, speaker_id: str) -> list[UtteranceRecord]:
        recs = [r for r in self.records if r.speaker_id == speaker_id]
        recs.sort(key=lambda r: r.utterance_index)
        return recs

    def subset(self, *, split: str | None = None, speakers=None, accents=None) -> "Manifest":
        keep = self.records
        if split is not None:
            if split not in SPLITS:
                raise DataError(f"unknown split {split!r}")
            keep = [r for r in keep if r.split == split]
        if speakers is not None:
            wanted = set(speakers)
            keep = [r for r in keep if r.speaker_id in wanted]
        if accents is not None:
            wanted = set(accents)
            keep = [r for r in keep if r.accent_region in wanted]
        if not keep:
            raise DataError("subset selects no records")
        return Manifest(tuple(keep), base_dir=self.base_dir)

    def resolve_path(self, rel_or_abs: str, root: str | Path | None = None) -> Path:
        """Resolve a path from a record against a root, default the manifest's directory."""
        p = Path(rel_or_abs)
        if p.is_absolute():
            return p
        if root is not None:
            return Path(root) / p
        if self.base_dir is not None:
            return Path(self.base_dir) / p
        return p


def _record_from_dict(raw: dict, where: str) -> UtteranceRecord:
    for name in _REQUIRED_FIELDS:
        if name not in raw or raw[name] is None:
            raise DataError(f"{where}: missing field {name!r}")
    if not isinstance(raw["utterance_index"], int) or isinstance(raw["utterance_index"], bool):
        raise DataError(f"{where}: utterance_index must be an integer")
    for name in _REQUIRED_FIELDS:
        if name != "utterance_index" and not isinstance(raw[name], str):
            raise DataError(f"{where}: field {name!r} must be a string")
    kwargs = {name: raw[name] for name in _REQUIRED_FIELDS}
    for name in _OPTIONAL_FIELDS:
        value = raw.get(name)
        if value is not None and not isinstance(value, str):
            raise DataError(f"{where}: field {name!r} must be a string or null")
        kwargs[name] = value
    return UtteranceRecord(**kwargs)


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a JSON Lines manifest.

    Raises:
        DataError: empty file, malformed JSON, missing or mistyped fields,
            duplicate utt_ids, or inconsistent speaker metadata.
    """
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise DataError(f"{path}:{lineno}: record must be a JSON object")
            records.append(_record_from_dict(raw, f"{path}:{lineno}"))
    if not records:
        raise DataError("empty manifest")
    try:
        return Manifest(tuple(records), base_dir=str(path.parent))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_manifest(records, path: str | Path) -> None:
    """Write utterance records as JSON Lines, one per record, in the given order."""
    from ._util import atomic_write_bytes

    lines = []
    for rec in records:
        payload = {
            "utt_id": rec.utt_id,
            "speaker_id": rec.speaker_id,
            "accent_region": rec.accent_region,
            "split": rec.split,
            "text": rec.text,
            "feature_path": rec.feature_path,
            "utterance_index": rec.utterance_index,
        }
        if rec.word_alignment_path is not None:
            payload["word_alignment_path"] = rec.word_alignment_path
        if rec.phone_alignment_path is not None:
            payload["phone_alignment_path"] = rec.phone_alignment_path
        lines.append(json.dumps(payload, sort_keys=True))
    atomic_write_bytes(("\n".join(lines) + "\n").encode("utf-8"), path)


def read_feature_file(path: str | Path) -> FeatureSequence:
    """Read one binary feature file.

    Raises:
        DataError: bad magic, truncated payload, trailing bytes, or
            non-finite values.
    """
    path = Path(path)
    with open(path, "rb") as handle:
        header = handle.read(_FTR_HEADER.size)
        if len(header) < _FTR_HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, n_frames, dim, rate = _FTR_HEADER.unpack(header)
        if magic != FTR_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if n_frames < 1 or dim < 1:
            raise DataError(f"{path}: empty feature matrix ({n_frames}x{dim})")
        payload = handle.read(4 * n_frames * dim)
        if len(payload) != 4 * n_frames * dim:
            raise DataError(
                f"{path}: truncated payload, expected {4 * n_frames * dim} bytes, "
                f"got {len(payload)}"
            )
        if handle.read(1):
            raise DataError(f"{path}: trailing data after feature payload")
    frames = np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim)
    if not np.isfinite(frames).all():
        raise DataError(f"{path}: non-finite feature values")
    if not (math.isfinite(rate) and rate > 0):
        raise DataError(f"{path}: bad frame rate {rate}")
    return FeatureSequence(frames.copy(), float(rate))


def write_feature_file(seq: FeatureSequence, path: str | Path) -> None:
    """Write a feature sequence; read_feature_file returns it bit-exactly."""
    from ._util import atomic_write_bytes

    header = _FTR_HEADER.pack(FTR_MAGIC, seq.num_frames, seq.dim, np.float32(seq.frame_rate_hz))
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    atomic_write_bytes(header + payload, path)


def slice_segment(seq: FeatureSequence, segment: Segment) -> FeatureSequence:
    """Cut the frame span covering a segment.

    The span is [floor(start_s * rate), ceil(end_s * rate)), clamped so at
    least one frame survives. A segment ending exactly at the utterance
    boundary keeps the final frame.

    Raises:
        DataError: segment lies outside the utterance.
    """
    rate = seq.frame_rate_hz
    n = seq.num_frames
    start = math.floor(segment.start_s * rate + _FRAME_EPS)
    end = math.ceil(segment.end_s * rate - _FRAME_EPS)
    if start >= n or segment.end_s * rate > n + _FRAME_EPS:
        raise DataError(
            f"segment {segment.label!r} [{segment.start_s}, {segment.end_s})s is outside "
            f"utterance {segment.utt_id!r} ({n} frames at {rate} Hz)"
        )
    start = max(0, start)
    end = min(end, n)
    if end <= start:
        end = min(start + 1, n)
        start = end - 1
    return FeatureSequence(seq.frames[start:end].copy(), rate)


# Punctuation stripped from token boundaries. Internal apostrophes survive,
# so clitics like "smith's" stay one token.
_STRIP_CHARS = string.punctuation + "‘’“”–—…"


def tokenize_transcript(text: str) -> list[str]:
    """Case-fold, split on whitespace, strip punctuation off token edges.

    "Mr. Smith's dog" becomes ["mr", "smith's", "dog"].
    """
    tokens = []
    for raw in text.lower().replace("’", "'").split():
        tok = raw.strip(_STRIP_CHARS)
        if tok:
            tokens.append(tok)
    return tokens


def load_alignment_file(path: str | Path, utt_id: str, *, tier: str = "word") -> list[Segment]:
    """Parse one alignment tier for one utterance.

    For the phone tier, prev/next context labels are filled from the
    neighboring lines, with CONTEXT_BOUNDARY at the utterance edges.

    Raises:
        DataError: malformed lines, unsorted segments, or bad times.
    """
    if tier not in ("word", "phone"):
        raise DataError(f"unknown alignment tier {tier!r}")
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected start<TAB>end<TAB>label")
            try:
                start_s, end_s = float(parts[0]), float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric segment times") from None
            rows.append((start_s, end_s, parts[2]))
    for prev_row, row in zip(rows, rows[1:]):
        if row[0] < prev_row[0]:
            raise DataError(f"{path}: segments not sorted by start time")
    segments = []
    for idx, (start_s, end_s, label) in enumerate(rows):
        prev_label = next_label = None
        if tier == "phone":
            prev_label = rows[idx - 1][2] if idx > 0 else CONTEXT_BOUNDARY
            next_label = rows[idx + 1][2] if idx + 1 < len(rows) else CONTEXT_BOUNDARY
        try:
            segments.append(
                Segment(utt_id, label, start_s, end_s, prev_label=prev_label, next_label=next_label)
            )
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return segments


def load_segment_index(
    manifest: Manifest, *, tier: str = "word", root: str | Path | None = None
) -> dict[str, list[Segment]]:
    """Load the alignment tier for every record that declares one.

    Returns a map utt_id -> segments. Records without the relevant
    alignment path are skipped; callers that require full coverage should
    check for it.
    """
    attr = "word_alignment_path" if tier == "word" else "phone_alignment_path"
    index: dict[str, list[Segment]] = {}
    for rec in manifest:
        rel = getattr(rec, attr)
        if rel is None:
            continue
        index[rec.utt_id] = load_alignment_file(
            manifest.resolve_path(rel, root), rec.utt_id, tier=tier
        )
    return index


@dataclass(frozen=True)
class EmbeddingRecord:
    utt_id: str
    kind: str
    vector: np.ndarray


def load_embeddings(path: str | Path, *, kind: str = "embedding") -> dict[str, np.ndarray]:
    """Load utterance embeddings from a sidecar file or a directory.

    A ``.jsonl`` file must hold ``{"utt_id": ..., "vector": [...]}`` records;
    a directory must hold per-utterance feature files with a single frame.

    Raises:
        DataError: duplicate utt_ids, dimension mismatches, or bad values.
    """
    path = Path(path)
    out: dict[str, np.ndarray] = {}
    dim = None
    if path.is_dir():
        for ftr in sorted(path.glob("*.ftr")):
            seq = read_feature_file(ftr)
            if seq.num_frames != 1:
                raise DataError(f"{ftr}: {kind} file must hold exactly one frame")
            out[ftr.stem] = seq.frames[0].copy()
            if dim is None:
                dim = seq.dim
            elif seq.dim != dim:
                raise DataError(f"{ftr}: {kind} dimension {seq.dim} != {dim}")
        if not out:
            raise DataError(f"{path}: no {kind} files found")
        return out
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict) or "utt_id" not in raw or "vector" not in raw:
                raise DataError(f"{path}:{lineno}: expected utt_id and vector fields")
            utt_id = raw["utt_id"]
            if utt_id in out:
                raise DataError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            vec = np.asarray(raw["vector"], dtype=np.float32)
            if vec.ndim != 1 or vec.size < 1:
                raise DataError(f"{path}:{lineno}: vector must be a non-empty 1-D list")
            if not np.isfinite(vec).all():
                raise DataError(f"{path}:{lineno}: non-finite vector values")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DataError(f"{path}:{lineno}: vector dimension {vec.size} != {dim}")
            out[utt_id] = vec
    if not out:
        raise DataError(f"{path}: empty {kind} sidecar")
    return out


@dataclass(frozen=True)
class PpgSequence:
    """Per-frame class posterior rows; every row is a probability vector."""

    frames: np.ndarray
    frame_rate_hz: float = 1.0

    # Row sums may drift from 1 by this much before the data is rejected.
    SUM_TOLERANCE = 1e-4

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise DataError(f"posterior matrix must be 2-D and non-empty, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise DataError("posterior matrix contains non-finite values")
        if (frames < 0).any():
            raise DataError("posterior rows must be non-negative")
        sums = frames.astype(np.float64).sum(axis=1)
        bad = np.abs(sums - 1.0) > self.SUM_TOLERANCE
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(f"posterior row {row} sums to {sums[row]:.6f}, expected 1")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate_hz", float(self.frame_rate_hz))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_classes(self) -> int:
        return self.frames.shape[1]


def load_ppg_file(path: str | Path) -> PpgSequence:
    """Read a posteriorgram stored in the feature file format."""
    seq = read_feature_file(path)
    try:
        return PpgSequence(seq.frames, seq.frame_rate_hz)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


@dataclass
class ValidationReport:
    """Outcome of a deep manifest check. Errors are fatal for pipelines."""

    record_count: int = 0
    speaker_count: int = 0
    split_counts: dict = field(default_factory=dict)
    accent_counts: dict = field(default_factory=dict)
    frame_rate_hz: float | None = None
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_manifest(
    path: str | Path, *, feature_root: str | Path | None = None, check_files: bool = True
) -> ValidationReport:
    """Load a manifest and run the soft checks that loading alone skips.

    Schema violations raise DataError exactly as load_manifest does.
    Unknown record fields become warnings. With check_files, every feature
    file must exist, parse, and share one frame rate; failures become
    errors in the report.
    """
    path = Path(path)
    report = ValidationReport()
    known = set(_REQUIRED_FIELDS) | set(_OPTIONAL_FIELDS)
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError:
                continue  # load_manifest below reports this as a hard error
            if isinstance(raw, dict):
                for key in sorted(set(raw) - known):
                    report.warnings.append(f"{path}:{lineno}: unknown field {key!r}")
    manifest = load_manifest(path)
    report.record_count = len(manifest)
    report.speaker_count = len(manifest.speakers)
    for rec in manifest:
        report.split_counts[rec.split] = report.split_counts.get(rec.split, 0) + 1
    for speaker, accent in manifest.speaker_accent.items():
        report.accent_counts[accent] = report.accent_counts.get(accent, 0) + 1
    if check_files:
        rates = set()
        for rec in manifest:
            f = manifest.resolve_path(rec.feature_path, feature_root)
            if not f.is_file():
                report.errors.append(f"{rec.utt_id}: feature file not found: {f}")
                continue
            try:
                seq = read_feature_file(f)
            except DataError as exc:
                report.errors.append(str(exc))
                continue
            rates.add(seq.frame_rate_hz)
        if len(rates) == 1:
            report.frame_rate_hz = rates.pop()
        elif len(rates) > 1:
            report.errors.append(f"mixed frame rates across feature files: {sorted(rates)}")
    return report


def permuted_accents(manifest: Manifest, mapping: dict) -> Manifest:
    """Relabel speaker accents according to a speaker -> accent map.

    Useful for permutation-null experiments; everything else in the
    records is preserved.
    """
    missing = set(manifest.speakers) - set(mapping)
    if missing:
        raise DataError(f"accent mapping misses speakers: {sorted(missing)}")
    records = tuple(replace(r, accent_region=mapping[r.speaker_id]) for r in manifest)
    return Manifest(records, base_dir=manifest.base_dir)
