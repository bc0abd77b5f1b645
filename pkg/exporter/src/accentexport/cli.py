"""Command line for the exporter, mirroring the toolkit's flag style.

Exit codes match the toolkit: 0 success, 1 configuration or usage
problem, 2 data problem. A job that finishes with per-utterance failures
prints each one and exits 2; partial outputs stay on disk so a fixed
rerun resumes where it left off.
"""

import argparse
import logging
import sys

from accenteval.errors import ConfigError, DataError

from . import jobs, models

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 means "data problem" here, so
    # rethrow as a config problem instead.
    def error(self, message):
        raise ConfigError(message)


def _add_common(parser, *, default_model: str) -> None:
    parser.add_argument("--manifest", required=True, help="audio manifest (JSON Lines)")
    parser.add_argument("--output-root", dest="output_root", required=True)
    parser.add_argument("--audio-root", dest="audio_root", help="base dir for audio paths (default: manifest dir)")
    parser.add_argument("--model", default=default_model)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--force", action="store_true", help="rewrite outputs that already exist")


def _job(args, layer) -> jobs.ExportJob:
    if args.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {args.workers}")
    return jobs.ExportJob(
        model_id=args.model,
        layer=layer,
        manifest_path=args.manifest,
        output_root=args.output_root,
        audio_root=args.audio_root,
    )


def cmd_features(args) -> jobs.ExportReport:
    return jobs.export_layer_features(
        _job(args, args.layer), workers=args.workers, force=args.force
    )


def cmd_embeddings(args) -> jobs.ExportReport:
    return jobs.export_embeddings(
        _job(args, models.OUTPUT_LAYER), args.kind, workers=args.workers, force=args.force
    )


def cmd_ppgs(args) -> jobs.ExportReport:
    return jobs.export_ppgs(_job(args, models.OUTPUT_LAYER), workers=args.workers, force=args.force)


def cmd_hypotheses(args) -> jobs.ExportReport:
    return jobs.export_asr_hypotheses(
        _job(args, models.OUTPUT_LAYER), workers=args.workers, force=args.force
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="accentexport", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")

    p = sub.add_parser("features", help="frame features for one encoder layer, plus the corpus manifest")
    _add_common(p, default_model="fbank-24")
    p.add_argument("--layer", type=int, required=True, help="1-based encoder layer")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("embeddings", help="utterance-level embedding sidecar")
    _add_common(p, default_model="")
    p.add_argument("--kind", required=True, choices=jobs.EMBEDDING_KINDS)
    p.set_defaults(func=cmd_embeddings)

    p = sub.add_parser("ppgs", help="per-utterance posteriorgrams")
    _add_common(p, default_model="fbank-ppg")
    p.set_defaults(func=cmd_ppgs)

    p = sub.add_parser("hypotheses", help="transcription sidecar")
    _add_common(p, default_model="oracle-asr")
    p.set_defaults(func=cmd_hypotheses)

    return parser


def run(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand == "embeddings" and not args.model:
            args.model = "fbank-accent" if args.kind == "accent" else "fbank-sv"
        report = args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    if not report.ok:
        for utt_id, message in report.failed:
            print(f"failed {utt_id}: {message}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(run())
