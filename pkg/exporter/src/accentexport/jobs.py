"""Export jobs: turn an audio manifest into toolkit interchange files.

Input is an audio manifest, JSON Lines with the same identity fields as
the toolkit's corpus manifest but an ``audio_path`` in place of
``feature_path`` (features do not exist yet; producing them is the job).
Outputs are written through the toolkit's own writers so round trips are
guaranteed by construction: frame features and PPGs as FTR files plus a
filled-in corpus manifest, embeddings and hypotheses as JSON Lines.

Jobs are stateless and resumable: existing outputs are skipped unless
force is set, per-utterance failures are recorded and the job carries on,
and every write is atomic (temp file, then rename).
"""

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from accenteval import UtteranceRecord, write_feature_file, write_manifest
from accenteval.corpus import FeatureSequence, PpgSequence
from accenteval.errors import ConfigError, DataError

from . import models

EMBEDDING_KINDS = ("accent", "speaker")

_RECORD_FIELDS = (
    "utt_id",
    "speaker_id",
    "accent_region",
    "split",
    "text",
    "audio_path",
    "utterance_index",
)
_PASSTHROUGH_FIELDS = ("word_alignment_path", "phone_alignment_path")


@dataclass(frozen=True)
class AudioRecord:
    utt_id: str
    speaker_id: str
    accent_region: str
    split: str
    text: str
    audio_path: str
    utterance_index: int
    word_alignment_path: str | None = None
    phone_alignment_path: str | None = None


def load_audio_manifest(path: str | Path) -> list:
    """Parse the exporter's input manifest.

    Raises:
        DataError: malformed JSON, missing or mistyped fields, duplicates.
    """
    path = Path(path)
    records = []
    seen = set()
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read audio manifest: {exc}") from None
    with handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise DataError(f"{where}: expected an object")
            for name in _RECORD_FIELDS:
                if name not in raw or raw[name] is None:
                    raise DataError(f"{where}: missing field {name!r}")
            if not isinstance(raw["utterance_index"], int) or isinstance(raw["utterance_index"], bool):
                raise DataError(f"{where}: utterance_index must be an integer")
            for name in _RECORD_FIELDS:
                if name != "utterance_index" and not isinstance(raw[name], str):
                    raise DataError(f"{where}: field {name!r} must be a string")
            if raw["utt_id"] in seen:
                raise DataError(f"{where}: duplicate utt_id {raw['utt_id']!r}")
            seen.add(raw["utt_id"])
            kwargs = {name: raw[name] for name in _RECORD_FIELDS}
            for name in _PASSTHROUGH_FIELDS:
                value = raw.get(name)
                if value is not None and not isinstance(value, str):
                    raise DataError(f"{where}: field {name!r} must be a string")
                kwargs[name] = value
            records.append(AudioRecord(**kwargs))
    if not records:
        raise DataError(f"{path}: audio manifest is empty")
    return records


@dataclass(frozen=True)
class ExportJob:
    """What to run: a model at a layer over a manifest, into an output root."""

    model_id: str
    layer: int | str
    manifest_path: Path
    output_root: Path
    audio_root: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "manifest_path", Path(self.manifest_path))
        object.__setattr__(self, "output_root", Path(self.output_root))
        if self.audio_root is not None:
            object.__setattr__(self, "audio_root", Path(self.audio_root))
        self.spec.validate_layer(self.layer)

    @property
    def spec(self) -> models.ModelSpec:
        return models.model_spec(self.model_id)

    def audio_path(self, record: AudioRecord) -> Path:
        base = self.audio_root if self.audio_root is not None else self.manifest_path.parent
        return base / record.audio_path


@dataclass
class ExportReport:
    """Per-utterance outcome of one job."""

    exported: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    failed: list = field(default_factory=list)  # (utt_id, message) pairs

    @property
    def ok(self) -> bool:
        return not self.failed

    def summary(self) -> str:
        return f"exported {len(self.exported)}, skipped {len(self.skipped)}, failed {len(self.failed)}"

    def _finish(self):
        self.exported.sort()
        self.skipped.sort()
        self.failed.sort()
        return self


def _atomic_write_text(text: str, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _run_per_utterance(records, workers: int, task) -> ExportReport:
    """Apply task(record) -> status to every record, collecting outcomes.

    task returns "exported" or "skipped"; exceptions become failures and
    the remaining utterances still run.
    """
    report = ExportReport()

    def guarded(record):
        try:
            return record.utt_id, task(record), None
        except (DataError, OSError) as exc:
            return record.utt_id, "failed", str(exc)

    if workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(guarded, records))
    else:
        outcomes = [guarded(r) for r in records]
    for utt_id, status, message in outcomes:
        if status == "failed":
            report.failed.append((utt_id, message))
        elif status == "skipped":
            report.skipped.append(utt_id)
        else:
            report.exported.append(utt_id)
    return report._finish()


# ---------------------------------------------------------------------------
# Operations


def export_layer_features(job: ExportJob, *, workers: int = 1, force: bool = False) -> ExportReport:
    """Write one FTR file per utterance and the filled-in corpus manifest.

    The manifest at <output_root>/manifest.jsonl lists every utterance
    whose features exist (freshly exported or skipped as already present),
    with feature paths relative to the manifest and alignment paths passed
    through. Failed utterances are left out, so a failure below a speaker's
    highest utterance index leaves a manifest that downstream loaders will
    reject until the job is re-run with that utterance fixed (they require
    dense per-speaker indices).

    Raises:
        DataError: the job produced no usable utterance at all.
    """
    spec = job.spec
    if spec.kind != "frame":
        raise ConfigError(f"model {job.model_id!r} does not produce frame features")
    records = load_audio_manifest(job.manifest_path)
    feature_dir = job.output_root / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)

    def task(record: AudioRecord) -> str:
        out = feature_dir / f"{record.utt_id}.ftr"
        if out.exists() and not force:
            return "skipped"
        samples, rate = models.read_wav(job.audio_path(record))
        frames, frame_rate = models.frame_features(spec, job.layer, samples, rate)
        write_feature_file(FeatureSequence(frames, frame_rate), out)
        return "exported"

    report = _run_per_utterance(records, workers, task)
    usable = set(report.exported) | set(report.skipped)
    manifest_records = [
        UtteranceRecord(
            utt_id=r.utt_id,
            speaker_id=r.speaker_id,
            accent_region=r.accent_region,
            split=r.split,
            text=r.text,
            feature_path=f"features/{r.utt_id}.ftr",
            utterance_index=r.utterance_index,
            word_alignment_path=r.word_alignment_path,
            phone_alignment_path=r.phone_alignment_path,
        )
        for r in records
        if r.utt_id in usable
    ]
    if not manifest_records:
        raise DataError("no utterance could be exported")
    write_manifest(manifest_records, job.output_root / "manifest.jsonl")
    return report


def export_embeddings(job: ExportJob, kind: str, *, workers: int = 1, force: bool = False) -> ExportReport:
    """Write <output_root>/<kind>_embeddings.jsonl, one vector per utterance."""
    if kind not in EMBEDDING_KINDS:
        raise ConfigError(f"embedding kind must be one of {EMBEDDING_KINDS}, got {kind!r}")
    spec = job.spec
    if spec.kind != "utterance":
        raise ConfigError(f"model {job.model_id!r} does not produce utterance embeddings")
    out = job.output_root / f"{kind}_embeddings.jsonl"
    records = load_audio_manifest(job.manifest_path)
    if out.exists() and not force:
        report = ExportReport(skipped=[r.utt_id for r in records])
        return report._finish()

    vectors = {}

    def task(record: AudioRecord) -> str:
        samples, rate = models.read_wav(job.audio_path(record))
        vectors[record.utt_id] = models.utterance_embedding(spec, samples, rate)
        return "exported"

    report = _run_per_utterance(records, workers, task)
    if not vectors:
        raise DataError("no utterance could be embedded")
    lines = [
        json.dumps(
            {"utt_id": utt_id, "vector": [float(x) for x in vectors[utt_id]]},
            sort_keys=True,
            separators=(",", ":"),
        )
        for utt_id in sorted(vectors)
    ]
    _atomic_write_text("\n".join(lines) + "\n", out)
    return report


def export_ppgs(job: ExportJob, *, workers: int = 1, force: bool = False) -> ExportReport:
    """Write per-utterance posteriorgrams under <output_root>/ppgs/."""
    spec = job.spec
    if spec.kind != "ppg":
        raise ConfigError(f"model {job.model_id!r} does not produce posteriorgrams")
    records = load_audio_manifest(job.manifest_path)
    ppg_dir = job.output_root / "ppgs"
    ppg_dir.mkdir(parents=True, exist_ok=True)

    def task(record: AudioRecord) -> str:
        out = ppg_dir / f"{record.utt_id}.ftr"
        if out.exists() and not force:
            return "skipped"
        samples, rate = models.read_wav(job.audio_path(record))
        rows, frame_rate = models.ppg_rows(spec, samples, rate)
        # PpgSequence re-checks the row sums; a violation here is a bug,
        # not a data problem.
        checked = PpgSequence(rows, frame_rate)
        write_feature_file(FeatureSequence(checked.frames, checked.frame_rate_hz), out)
        return "exported"

    return _run_per_utterance(records, workers, task)


def export_asr_hypotheses(job: ExportJob, *, workers: int = 1, force: bool = False) -> ExportReport:
    """Write <output_root>/hypotheses.jsonl with one transcript per utterance."""
    spec = job.spec
    if spec.kind != "asr":
        raise ConfigError(f"model {job.model_id!r} does not transcribe")
    out = job.output_root / "hypotheses.jsonl"
    records = load_audio_manifest(job.manifest_path)
    if out.exists() and not force:
        report = ExportReport(skipped=[r.utt_id for r in records])
        return report._finish()

    texts = {}

    def task(record: AudioRecord) -> str:
        texts[record.utt_id] = models.transcribe(spec, record.text)
        return "exported"

    report = _run_per_utterance(records, workers, task)
    if not texts:
        raise DataError("no utterance could be transcribed")
    lines = [
        json.dumps({"text": texts[utt_id], "utt_id": utt_id}, sort_keys=True, separators=(",", ":"))
        for utt_id in sorted(texts)
    ]
    _atomic_write_text("\n".join(lines) + "\n", out)
    return report
