"""Command-line pipeline driver.

Configuration lives in a single JSON file with a fixed key set; every
value can also be overridden by a flag, and two environment variables
(ACCENTEVAL_OUTPUT_DIR, ACCENTEVAL_WORKERS) slot between file and flags.
Unknown keys are rejected rather than ignored so typos fail loudly.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
All outputs are deterministic functions of config plus inputs; rerunning
a subcommand reproduces byte-identical files.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import abx as abx_mod
from . import corpus, quantizer, recoverability
from ._util import atomic_write_bytes, write_json
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "ACCENTEVAL_OUTPUT_DIR"
WORKERS_ENV = "ACCENTEVAL_WORKERS"


# ---------------------------------------------------------------------------
# Configuration


def _reject_unknown(raw: dict, allowed, where: str) -> None:
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key(s) in {where}: {', '.join(unknown)}")


def _get_int(raw, key, default, where, *, minimum=None):
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    return value


def _get_float(raw, key, default, where, *, low=None, high=None, low_open=False, high_open=False):
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    value = float(value)
    if low is not None and (value <= low if low_open else value < low):
        raise ConfigError(f"{where}.{key} must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and (value >= high if high_open else value > high):
        raise ConfigError(f"{where}.{key} must be {'<' if high_open else '<='} {high}, got {value}")
    return value


def _get_str(raw, key, default, where, *, choices=None, optional=False):
    value = raw.get(key, default)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where}.{key} is required")
    if not isinstance(value, str):
        raise ConfigError(f"{where}.{key} must be a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{where}.{key} must be one of {sorted(choices)}, got {value!r}")
    return value


@dataclass
class PathsConfig:
    manifest: str | None = None
    feature_root: str | None = None
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, raw: dict) -> "PathsConfig":
        _reject_unknown(raw, ("manifest", "feature_root", "output_dir"), "paths")
        return cls(
            manifest=_get_str(raw, "manifest", None, "paths", optional=True),
            feature_root=_get_str(raw, "feature_root", None, "paths", optional=True),
            output_dir=_get_str(raw, "output_dir", "out", "paths"),
        )


@dataclass
class QuantizerConfig:
    codebook_size: int = 1024
    decay: float = 0.99
    epsilon: float = 1e-5
    max_frames: int = 2_000_000
    epochs: int = 50
    min_improvement: float | None = 1e-6

    @classmethod
    def from_dict(cls, raw: dict) -> "QuantizerConfig":
        allowed = ("codebook_size", "decay", "epsilon", "max_frames", "epochs", "min_improvement")
        _reject_unknown(raw, allowed, "quantizer")
        min_improvement = raw.get("min_improvement", 1e-6)
        if min_improvement is not None:
            min_improvement = _get_float(raw, "min_improvement", 1e-6, "quantizer", low=0.0, low_open=True)
        return cls(
            codebook_size=_get_int(raw, "codebook_size", 1024, "quantizer", minimum=1),
            decay=_get_float(raw, "decay", 0.99, "quantizer", low=0.0, high=1.0, low_open=True, high_open=True),
            epsilon=_get_float(raw, "epsilon", 1e-5, "quantizer", low=0.0, low_open=True),
            max_frames=_get_int(raw, "max_frames", 2_000_000, "quantizer", minimum=1),
            epochs=_get_int(raw, "epochs", 50, "quantizer", minimum=1),
            min_improvement=min_improvement,
        )

    def train_config(self, seed: int) -> quantizer.TrainConfig:
        return quantizer.TrainConfig(
            seed=seed,
            epochs=self.epochs,
            decay=self.decay,
            epsilon=self.epsilon,
            max_frames=self.max_frames,
            min_improvement=self.min_improvement,
        )


@dataclass
class AbxBlockConfig:
    condition: str = "accent"
    top_n_words: int = 100
    p_percent: float = 10.0
    max_per_cell: int = 500
    token_embedding: str = "centroid"
    codebook: str | None = None
    selector_feature_root: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "AbxBlockConfig":
        allowed = (
            "condition",
            "top_n_words",
            "p_percent",
            "max_per_cell",
            "token_embedding",
            "codebook",
            "selector_feature_root",
        )
        _reject_unknown(raw, allowed, "abx")
        return cls(
            condition=_get_str(raw, "condition", "accent", "abx", choices=("accent", "speaker", "phone")),
            top_n_words=_get_int(raw, "top_n_words", 100, "abx", minimum=1),
            p_percent=_get_float(raw, "p_percent", 10.0, "abx", low=0.0, high=100.0, low_open=True),
            max_per_cell=_get_int(raw, "max_per_cell", 500, "abx", minimum=1),
            token_embedding=_get_str(
                raw, "token_embedding", "centroid", "abx", choices=("centroid", "one_hot")
            ),
            codebook=_get_str(raw, "codebook", None, "abx", optional=True),
            selector_feature_root=_get_str(raw, "selector_feature_root", None, "abx", optional=True),
        )


@dataclass
class MetricsBlockConfig:
    js_base: float = 2.0
    wer_pooling: str = "pooled"
    wer_per_speaker: int = 24
    generated_manifest: str | None = None
    copysyn_manifest: str | None = None
    target_speakers: list = field(default_factory=list)
    accent_embeddings: str | None = None
    speaker_embeddings: str | None = None
    ppg_root: str | None = None
    hypotheses: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricsBlockConfig":
        allowed = (
            "js_base",
            "wer_pooling",
            "wer_per_speaker",
            "generated_manifest",
            "copysyn_manifest",
            "target_speakers",
            "accent_embeddings",
            "speaker_embeddings",
            "ppg_root",
            "hypotheses",
        )
        _reject_unknown(raw, allowed, "metrics")
        targets = raw.get("target_speakers", [])
        if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
            raise ConfigError(f"metrics.target_speakers must be a list of strings, got {targets!r}")
        return cls(
            js_base=_get_float(raw, "js_base", 2.0, "metrics", low=1.0, low_open=True),
            wer_pooling=_get_str(raw, "wer_pooling", "pooled", "metrics", choices=("pooled", "averaged")),
            wer_per_speaker=_get_int(raw, "wer_per_speaker", 24, "metrics", minimum=1),
            generated_manifest=_get_str(raw, "generated_manifest", None, "metrics", optional=True),
            copysyn_manifest=_get_str(raw, "copysyn_manifest", None, "metrics", optional=True),
            target_speakers=list(targets),
            accent_embeddings=_get_str(raw, "accent_embeddings", None, "metrics", optional=True),
            speaker_embeddings=_get_str(raw, "speaker_embeddings", None, "metrics", optional=True),
            ppg_root=_get_str(raw, "ppg_root", None, "metrics", optional=True),
            hypotheses=_get_str(raw, "hypotheses", None, "metrics", optional=True),
        )


@dataclass
class RunConfig:
    seed: int = 0
    workers: int | None = None
    paths: PathsConfig = field(default_factory=PathsConfig)
    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)
    abx: AbxBlockConfig = field(default_factory=AbxBlockConfig)
    metrics: MetricsBlockConfig = field(default_factory=MetricsBlockConfig)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
        _reject_unknown(raw, ("seed", "workers", "paths", "quantizer", "abx", "metrics"), "config")
        for block in ("paths", "quantizer", "abx", "metrics"):
            if block in raw and not isinstance(raw[block], dict):
                raise ConfigError(f"config.{block} must be an object")
        workers = raw.get("workers")
        if workers is not None:
            workers = _get_int(raw, "workers", None, "config", minimum=1)
        return cls(
            seed=_get_int(raw, "seed", 0, "config", minimum=0),
            workers=workers,
            paths=PathsConfig.from_dict(raw.get("paths", {})),
            quantizer=QuantizerConfig.from_dict(raw.get("quantizer", {})),
            abx=AbxBlockConfig.from_dict(raw.get("abx", {})),
            metrics=MetricsBlockConfig.from_dict(raw.get("metrics", {})),
        )

    def to_dict(self) -> dict:
        # The worker count is a runtime knob with no effect on results, so
        # it stays out of the echoed config (keeps report files identical
        # across machines with different core counts).
        out = asdict(self)
        out.pop("workers")
        return out

    def effective_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        return os.cpu_count() or 1


def _set_dotted(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    cur = raw
    for part in parts[:-1]:
        nxt = cur.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"config.{part} must be an object")
        cur = nxt
    cur[parts[-1]] = value


# Flag destination -> config key path. Only flags the user actually set
# are applied, so file values survive unless overridden.
_FLAG_KEYS = {
    "seed": "seed",
    "workers": "workers",
    "manifest": "paths.manifest",
    "feature_root": "paths.feature_root",
    "output_dir": "paths.output_dir",
    "codebook_size": "quantizer.codebook_size",
    "epochs": "quantizer.epochs",
    "decay": "quantizer.decay",
    "epsilon": "quantizer.epsilon",
    "max_frames": "quantizer.max_frames",
    "min_improvement": "quantizer.min_improvement",
    "condition": "abx.condition",
    "top_n_words": "abx.top_n_words",
    "p_percent": "abx.p_percent",
    "max_per_cell": "abx.max_per_cell",
    "token_embedding": "abx.token_embedding",
    "codebook": "abx.codebook",
    "selector_feature_root": "abx.selector_feature_root",
    "js_base": "metrics.js_base",
    "wer_pooling": "metrics.wer_pooling",
    "wer_per_speaker": "metrics.wer_per_speaker",
    "generated_manifest": "metrics.generated_manifest",
    "copysyn_manifest": "metrics.copysyn_manifest",
    "target_speakers": "metrics.target_speakers",
    "accent_embeddings": "metrics.accent_embeddings",
    "speaker_embeddings": "metrics.speaker_embeddings",
    "ppg_root": "metrics.ppg_root",
    "hypotheses": "metrics.hypotheses",
}


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Assemble the effective config: file, then env, then flags."""
    raw: dict = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: invalid JSON ({exc.msg})") from None
    if OUTPUT_DIR_ENV in os.environ:
        _set_dotted(raw, "paths.output_dir", os.environ[OUTPUT_DIR_ENV])
    if WORKERS_ENV in os.environ:
        try:
            _set_dotted(raw, "workers", int(os.environ[WORKERS_ENV]))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {os.environ[WORKERS_ENV]!r}") from None
    for attr, dotted in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            _set_dotted(raw, dotted, value)
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the documented contract
    # reserves 2 for data errors, so route usage problems through
    # ConfigError and let run() turn them into exit 1.
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="base seed for every random choice")
    p.add_argument("--workers", type=int, help="parallel workers (results never depend on this)")
    p.add_argument("--manifest", help="corpus manifest (JSON Lines)")
    p.add_argument("--feature-root", dest="feature_root", help="root for relative feature paths")
    p.add_argument("--output-dir", dest="output_dir", help="directory for emitted files")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="accenteval", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-manifest", help="check a manifest and its feature files")
    _add_common(p)
    p.add_argument("--skip-files", action="store_true", help="schema checks only")
    p.set_defaults(func=cmd_validate_manifest)

    p = sub.add_parser("train-codebook", help="train an EMA k-means codebook on the train split")
    _add_common(p)
    p.add_argument("--codebook-size", dest="codebook_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--decay", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-frames", dest="max_frames", type=int)
    p.add_argument("--min-improvement", dest="min_improvement", type=float)
    p.add_argument("--out", help="codebook output path")
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("quantize", help="map every utterance to code indices")
    _add_common(p)
    p.add_argument("--codebook", help="trained codebook file")
    p.add_argument("--out", help="tokens output path (JSON Lines)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("abx", help="ABX discrimination for one condition")
    _add_common(p)
    p.add_argument("--condition", choices=("accent", "speaker", "phone"))
    p.add_argument("--top-n-words", dest="top_n_words", type=int)
    p.add_argument("--p-percent", dest="p_percent", type=float)
    p.add_argument("--max-per-cell", dest="max_per_cell", type=int)
    p.add_argument("--token-embedding", dest="token_embedding", choices=("centroid", "one_hot"))
    p.add_argument("--codebook", help="evaluate tokens from this codebook instead of raw features")
    p.add_argument(
        "--selector-feature-root",
        dest="selector_feature_root",
        help="features used for word-combination selection (defaults to --feature-root)",
    )
    p.set_defaults(func=cmd_abx)

    p = sub.add_parser("metrics", help="similarity/PPG/WER suite over an evaluation plan")
    _add_common(p)
    p.add_argument("--generated-manifest", dest="generated_manifest")
    p.add_argument("--copysyn-manifest", dest="copysyn_manifest")
    p.add_argument(
        "--target-speakers",
        dest="target_speakers",
        type=lambda s: [t for t in s.split(",") if t],
        help="comma-separated target speaker ids",
    )
    p.add_argument("--accent-embeddings", dest="accent_embeddings")
    p.add_argument("--speaker-embeddings", dest="speaker_embeddings")
    p.add_argument("--ppg-root", dest="ppg_root")
    p.add_argument("--hypotheses", help="ASR hypotheses (JSON Lines {utt_id, text})")
    p.add_argument("--js-base", dest="js_base", type=float)
    p.add_argument("--wer-pooling", dest="wer_pooling", choices=("pooled", "averaged"))
    p.add_argument("--wer-per-speaker", dest="wer_per_speaker", type=int)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("plotdata", help="flatten report files into a long-format CSV")
    _add_common(p)
    p.add_argument("reports", nargs="+", help="report JSON files from other subcommands")
    p.add_argument("--axis", default="config.quantizer.codebook_size", help="dotted key of the sweep axis")
    p.add_argument("--out", help="output CSV path (defaults into the output dir)")
    p.set_defaults(func=cmd_plotdata)

    return parser


# ---------------------------------------------------------------------------
# Shared helpers


def _require(value, key: str):
    if value is None:
        raise ConfigError(f"{key} is required (config key or flag)")
    return value


def _output_dir(config: RunConfig) -> Path:
    out = Path(config.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_manifest(config: RunConfig) -> corpus.Manifest:
    path = _require(config.paths.manifest, "paths.manifest")
    return corpus.load_manifest(path)


def _train_features(manifest: corpus.Manifest, feature_root):
    train = manifest.subset(split="train")
    for rec in sorted(train, key=lambda r: r.utt_id):
        yield corpus.read_feature_file(manifest.resolve_path(rec.feature_path, feature_root))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate_manifest(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    path = _require(config.paths.manifest, "paths.manifest")
    report = corpus.validate_manifest(
        path, feature_root=config.paths.feature_root, check_files=not args.skip_files
    )
    payload = {
        "kind": "validation_report",
        "manifest": str(path),
        "record_count": report.record_count,
        "speaker_count": report.speaker_count,
        "split_counts": report.split_counts,
        "accent_counts": report.accent_counts,
        "frame_rate_hz": report.frame_rate_hz,
        "errors": report.errors,
        "warnings": report.warnings,
        "config": config.to_dict(),
    }
    out = _output_dir(config) / "validation_report.json"
    write_json(payload, out)
    for line in report.warnings:
        print(f"warning: {line}")
    for line in report.errors:
        print(f"error: {line}")
    status = "ok" if report.ok else "INVALID"
    print(
        f"manifest {status}: {report.record_count} utterances, "
        f"{report.speaker_count} speakers, {len(report.errors)} errors, "
        f"{len(report.warnings)} warnings"
    )
    if not report.ok:
        raise DataError(f"manifest validation failed with {len(report.errors)} error(s)")
    return 0


def cmd_train_codebook(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    manifest = _load_manifest(config)
    sequences = _train_features(manifest, config.paths.feature_root)
    epoch_errors: list = []
    book = quantizer.train_codebook(
        sequences,
        config.quantizer.codebook_size,
        config.quantizer.train_config(config.seed),
        on_epoch=lambda _epoch, err: epoch_errors.append(err),
    )
    out_dir = _output_dir(config)
    out = Path(args.out) if args.out else out_dir / f"codebook_k{book.size}.vqcb"
    quantizer.save_codebook(book, out)
    log_payload = {
        "kind": "training_log",
        "codebook_path": str(out),
        "codebook_size": book.size,
        "feature_dim": book.dim,
        "epochs_run": len(epoch_errors),
        "epoch_errors": epoch_errors,
        "final_error": epoch_errors[-1],
        "config": config.to_dict(),
    }
    write_json(log_payload, out_dir / "training_log.json")
    print(f"trained {book.size} codes over {book.dim} dims, final error {epoch_errors[-1]:.6f}")
    print(f"codebook written to {out}")
    return 0


def cmd_quantize(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    manifest = _load_manifest(config)
    book = quantizer.load_codebook(_require(config.abx.codebook, "abx.codebook"))
    lines = []
    for rec in sorted(manifest, key=lambda r: r.utt_id):
        seq = corpus.read_feature_file(
            manifest.resolve_path(rec.feature_path, config.paths.feature_root)
        )
        toks = quantizer.quantize(seq, book)
        lines.append(
            json.dumps(
                {
                    "utt_id": rec.utt_id,
                    "tokens": toks.tokens.tolist(),
                    "codebook_size": toks.codebook_size,
                    "frame_rate_hz": toks.frame_rate_hz,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    out = Path(args.out) if args.out else _output_dir(config) / "tokens.jsonl"
    atomic_write_bytes(("\n".join(lines) + "\n").encode("utf-8"), out)
    print(f"quantized {len(lines)} utterances with {book.size} codes to {out}")
    return 0


def _abx_provider(config: RunConfig, manifest, *, selector: bool):
    if selector:
        root = config.abx.selector_feature_root or config.paths.feature_root
        return abx_mod.SegmentFeatureProvider(manifest, feature_root=root)
    book = None
    if config.abx.codebook is not None:
        book = quantizer.load_codebook(config.abx.codebook)
    return abx_mod.SegmentFeatureProvider(
        manifest,
        feature_root=config.paths.feature_root,
        codebook=book,
        token_embedding=config.abx.token_embedding,
    )


def cmd_abx(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    manifest = _load_manifest(config)
    condition = abx_mod.condition_from_name(config.abx.condition)
    tier = "phone" if condition.name == "phone" else "word"
    segments = corpus.load_segment_index(manifest, tier=tier)
    if not segments:
        raise DataError(
            f"condition={condition.name} needs {tier} alignments, "
            f"but no record declares a {tier}_alignment_path"
        )
    caps = abx_mod.SamplingCaps(max_per_cell=config.abx.max_per_cell)
    workers = config.effective_workers()
    out_dir = _output_dir(config)
    test_manifest = manifest.subset(split="test")
    scorer = _abx_provider(config, manifest, selector=False)

    if condition.name == "accent":
        combos = abx_mod.select_accent_word_combinations(
            manifest.subset(split="train"),
            segments,
            _abx_provider(config, manifest, selector=True),
            top_n_words=config.abx.top_n_words,
            p_percent=config.abx.p_percent,
            caps=caps,
            seed=config.seed,
            workers=workers,
        )
        abx_mod.write_combinations_csv(combos, out_dir / "combinations.csv")
        print(
            f"selected {len(combos.entries)} of {combos.candidate_count} "
            f"accent/word combinations ({combos.p_percent}%)"
        )
        report = abx_mod.accent_abx_score(
            test_manifest, segments, combos, scorer, caps=caps, seed=config.seed, workers=workers
        )
    else:
        cells = abx_mod.enumerate_triplets(
            condition, test_manifest, segments, caps=caps, seed=config.seed
        )
        report = abx_mod.abx_error_rate(cells, scorer, condition=condition, workers=workers)

    abx_mod.write_abx_report_json(report, out_dir / "abx_report.json", {"config": config.to_dict()})
    abx_mod.write_abx_report_csv(report, out_dir / "abx_report.csv")
    if report.dropped_cells:
        print(f"warning: {report.dropped_cells} combination(s) had no test triplets")
    print(
        f"{condition.name} abx error: {report.aggregate:.6f} "
        f"({len(report.cells)} cells, {report.total_triplets} triplets)"
    )
    return 0


def _metric_inputs(config: RunConfig, gt_manifest, copysyn_manifest):
    m = config.metrics
    accent = corpus.load_embeddings(m.accent_embeddings, kind="accent embedding") if m.accent_embeddings else None
    speaker = corpus.load_embeddings(m.speaker_embeddings, kind="speaker embedding") if m.speaker_embeddings else None
    ppgs = recoverability.PpgDirectory(m.ppg_root) if m.ppg_root else None
    transcripts = None
    if m.hypotheses:
        # Ground-truth transcripts come from the manifests; the hypotheses
        # file covers generated (and copy-synthesis) audio and wins on
        # overlap so real ASR output is never shadowed.
        transcripts = {rec.utt_id: rec.text for rec in gt_manifest}
        if copysyn_manifest is not None:
            transcripts.update({rec.utt_id: rec.text for rec in copysyn_manifest})
        transcripts.update(recoverability.load_transcripts(m.hypotheses))
    return recoverability.MetricInputs(
        accent_embeddings=accent,
        speaker_embeddings=speaker,
        ppgs=ppgs,
        transcripts=transcripts,
        js_base=m.js_base,
    )


def cmd_metrics(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    m = config.metrics
    gt_manifest = _load_manifest(config)
    gen_manifest = corpus.load_manifest(_require(m.generated_manifest, "metrics.generated_manifest"))
    copysyn_manifest = corpus.load_manifest(m.copysyn_manifest) if m.copysyn_manifest else None
    if not m.target_speakers:
        raise ConfigError("metrics.target_speakers is required")
    inputs = _metric_inputs(config, gt_manifest, copysyn_manifest)
    available = [name for name in recoverability.METRIC_NAMES if inputs.available(name)]
    if not available:
        raise ConfigError(
            "no metric inputs given: set at least one of metrics.accent_embeddings, "
            "metrics.speaker_embeddings, metrics.ppg_root, metrics.hypotheses"
        )
    plan_config = recoverability.PlanConfig(seed=config.seed, wer_per_speaker=m.wer_per_speaker)
    plan = recoverability.build_eval_plan(gt_manifest, gen_manifest, m.target_speakers, plan_config)
    report = recoverability.metric_report(plan, inputs, wer_pooling=m.wer_pooling)
    # Bounds anchor the conversion eval, so the source side is the set of
    # speakers that were actually converted, not every non-target speaker.
    converted = sorted({rec.speaker_id for rec in gen_manifest})
    for metric in available:
        try:
            report.bounds[metric] = recoverability.compute_bounds(
                metric,
                gt_manifest,
                m.target_speakers,
                inputs,
                copysyn_manifest=copysyn_manifest,
                source_speakers=converted,
                config=plan_config,
                wer_pooling=m.wer_pooling,
            )
        except DataError as exc:
            logger.warning("bounds for %s skipped: %s", metric, exc)
    for metric in report.nulled_metrics:
        print(f"warning: no inputs for {metric}, values nulled")
    out_dir = _output_dir(config)
    extra = {"config": config.to_dict(), "plan": recoverability.plan_payload(plan)}
    recoverability.write_metric_report_json(report, out_dir / "metric_report.json", extra)
    recoverability.write_metric_report_csv(report, out_dir / "metric_report.csv")
    for column in recoverability.SUMMARY_COLUMNS:
        value = report.summary.get(column)
        print(f"{column}: " + (f"{value:.6f}" if value is not None else "n/a"))
    return 0


_REPORT_METRICS = {
    "abx_report": lambda payload: {"abx_error": payload["aggregate"]},
    "metric_report": lambda payload: {
        name: value for name, value in payload["summary"].items() if value is not None
    },
    "training_log": lambda payload: {"final_error": payload["final_error"]},
}


def _dotted_lookup(payload: dict, dotted: str):
    cur = payload
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise DataError(f"report has no key {dotted!r}")
        cur = cur[part]
    return cur


def cmd_plotdata(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    series = []
    kinds = set()
    axis_seen = set()
    for report_path in args.reports:
        try:
            with open(report_path, "r", encoding="utf-8") as handle:
                payload = json.load(handle)
        except FileNotFoundError:
            raise DataError(f"report not found: {report_path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{report_path}: invalid JSON ({exc.msg})") from None
        kind = payload.get("kind")
        if kind not in _REPORT_METRICS:
            raise DataError(f"{report_path}: unsupported report kind {kind!r}")
        kinds.add(kind)
        if len(kinds) > 1:
            raise DataError(f"mixed report kinds: {sorted(kinds)}")
        try:
            axis_value = _dotted_lookup(payload, args.axis)
        except DataError as exc:
            raise DataError(f"{report_path}: {exc}") from None
        if not isinstance(axis_value, (int, float, str)) or isinstance(axis_value, bool):
            raise DataError(f"{report_path}: axis {args.axis!r} is not a scalar: {axis_value!r}")
        if axis_value in axis_seen:
            raise DataError(f"duplicate axis value {axis_value!r} across reports")
        axis_seen.add(axis_value)
        for metric, value in _REPORT_METRICS[kind](payload).items():
            series.append((axis_value, metric, value))

    series.sort(key=lambda row: (row[1], str(row[0])))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["axis", "metric", "value"])
    for axis_value, metric, value in series:
        writer.writerow([axis_value, metric, repr(float(value))])
    out = Path(args.out) if args.out else _output_dir(config) / "plot_data.csv"
    atomic_write_bytes(buf.getvalue().encode("utf-8"), out)
    print(f"wrote {len(series)} rows to {out}")
    return 0


# ---------------------------------------------------------------------------
# Entry points


def run(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(run())
