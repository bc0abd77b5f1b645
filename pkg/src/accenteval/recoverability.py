"""Objective metrics for cross-accent voice conversion outputs.

Four metrics over (generated, reference) utterance pairs:

* accent_sim / speaker_sim: cosine similarity of utterance-level accent or
  speaker embeddings.
* ppg: DTW-aligned Jensen-Shannon distance between phonetic
  posteriorgrams, measuring how well spoken content survives conversion.
* wer: word error rate of hypothesis transcripts against ground truth.

The evaluation pairing plan matches each generated utterance to its source
speaker's ground truth (direction to_source) and to its target speaker's
ground truth (to_target). Similarity and PPG pairs are restricted to the
shared elicitation prompts, where every speaker reads the same sentences,
so the comparison is content-controlled. WER pairs are a fixed-size seeded
sample per speaker over all generated utterances.

Bound anchors contextualize the numbers: the lower bound scores ground
truth against ground truth across speakers (chance level), the upper bound
scores copy-synthesis against ground truth (the best the synthesis stack
can do without any conversion).
"""

import csv
import io
import json
import logging
import math
from collections import OrderedDict
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus
from ._dtw import min_mean_path
from ._util import atomic_write_bytes, stable_seed, write_json
from .corpus import Manifest, PpgSequence
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

METRIC_NAMES = ("accent_sim", "speaker_sim", "ppg", "wer")
DIRECTIONS = ("to_source", "to_target")
SIMILARITY_METRICS = frozenset({"accent_sim", "speaker_sim", "ppg"})

# Column order of the summary block and CSV.
SUMMARY_COLUMNS = (
    "A-SIM (src)",
    "A-SIM (tgt)",
    "S-SIM (src)",
    "S-SIM (tgt)",
    "PPG",
    "WER",
)


# ---------------------------------------------------------------------------
# Scalar metrics


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Raises:
        DataError: shape mismatch, non-finite values, or a zero vector.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape or u.size == 0:
        raise DataError(f"expected equal-length 1-D vectors, got shapes {u.shape} and {v.shape}")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise DataError("non-finite embedding values")
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu == 0.0 or nv == 0.0:
        raise DataError("cosine similarity is undefined for a zero vector")
    return min(1.0, max(-1.0, float(u @ v) / (nu * nv)))


def _js_cost_matrix(p: np.ndarray, q: np.ndarray, base: float) -> np.ndarray:
    """Pairwise Jensen-Shannon distances between posterior rows.

    Entry (i, j) is sqrt(JSD(p_i, q_j)) with logs in the given base; for
    base 2 the value lies in [0, 1]. Zero posterior entries contribute
    nothing (0 log 0 = 0).
    """
    p = p.astype(np.float64)
    q = q.astype(np.float64)
    log_base = math.log(base)
    n, m = p.shape[0], q.shape[0]
    cost = np.empty((n, m), dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_p = np.where(p > 0, np.log(p), 0.0)
        log_q = np.where(q > 0, np.log(q), 0.0)
        chunk = max(1, 1_000_000 // max(1, m * p.shape[1]))
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            block = p[lo:hi][:, None, :]
            mid = 0.5 * (block + q[None, :, :])
            log_mid = np.where(mid > 0, np.log(mid), 0.0)
            kl_p = (block * (log_p[lo:hi][:, None, :] - log_mid)).sum(axis=-1)
            kl_q = (q[None, :, :] * (log_q[None, :, :] - log_mid)).sum(axis=-1)
            jsd = 0.5 * (kl_p + kl_q) / log_base
            cost[lo:hi] = np.sqrt(np.maximum(jsd, 0.0))
    return cost


def _as_ppg(seq) -> PpgSequence:
    if isinstance(seq, PpgSequence):
        return seq
    return PpgSequence(np.asarray(seq))


def ppg_js_distance(p, q, *, base: float = 2.0) -> float:
    """Mean Jensen-Shannon distance between two posteriorgrams after DTW.

    The sequences are aligned by the same mean-cost DTW used for feature
    sequences, with per-frame cost sqrt(JSD(p_i, q_j)); with base-2 logs
    the result lies in [0, 1], is symmetric, and is 0 iff the sequences
    are identical.

    Args:
        base: logarithm base for the divergence; 2 bounds the distance by 1.

    Raises:
        ConfigError: base not greater than 1.
        DataError: class-count mismatch or rows that are not distributions.
    """
    if not base > 1.0:
        raise ConfigError(f"JS log base must be > 1, got {base}")
    pp = _as_ppg(p)
    qq = _as_ppg(q)
    if pp.num_classes != qq.num_classes:
        raise DataError(f"posterior class counts differ: {pp.num_classes} != {qq.num_classes}")
    return min_mean_path(_js_cost_matrix(pp.frames, qq.frames, base))


# ---------------------------------------------------------------------------
# Word error rate


def edit_distance(ref: list, hyp: list) -> int:
    """Levenshtein distance between two token sequences."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def wer_counts(ref_text: str, hyp_text: str) -> tuple:
    """Word edit errors and reference length for one transcript pair.

    Raises:
        DataError: reference tokenizes to nothing.
    """
    ref = corpus.tokenize_transcript(ref_text)
    hyp = corpus.tokenize_transcript(hyp_text)
    if not ref:
        raise DataError(f"reference transcript has no words: {ref_text!r}")
    return edit_distance(ref, hyp), len(ref)


def word_error_rate(ref_text: str, hyp_text: str) -> float:
    """WER for one pair: substitutions + deletions + insertions over ref length."""
    errors, length = wer_counts(ref_text, hyp_text)
    return errors / length


def corpus_word_error_rate(pairs, *, pooling: str = "pooled") -> float:
    """WER over many transcript pairs.

    With pooling="pooled" the edit errors and reference lengths are summed
    before dividing, so long utterances weigh more; "averaged" takes the
    plain mean of per-pair rates instead.
    """
    if pooling not in ("pooled", "averaged"):
        raise ConfigError(f"pooling must be 'pooled' or 'averaged', got {pooling!r}")
    counts = [wer_counts(ref, hyp) for ref, hyp in pairs]
    if not counts:
        raise DataError("no transcript pairs to score")
    if pooling == "pooled":
        total_errors = sum(e for e, _ in counts)
        total_length = sum(n for _, n in counts)
        return total_errors / total_length
    return sum(e / n for e, n in counts) / len(counts)


# ---------------------------------------------------------------------------
# Evaluation plan


@dataclass(frozen=True)
class EvalPair:
    """One generated-versus-reference comparison and the metrics it feeds."""

    generated_utt: str
    reference_utt: str
    direction: str
    metric_set: frozenset

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise DataError(f"unknown direction {self.direction!r}")
        unknown = set(self.metric_set) - set(METRIC_NAMES)
        if unknown:
            raise DataError(f"unknown metrics in pair: {sorted(unknown)}")


@dataclass(frozen=True)
class PlanConfig:
    seed: int = 0
    wer_per_speaker: int = 24
    shared_prompt_count: int = corpus.SHARED_PROMPT_UTTERANCES

    def __post_init__(self):
        if self.wer_per_speaker < 1:
            raise ConfigError(f"wer_per_speaker must be >= 1, got {self.wer_per_speaker}")
        if self.shared_prompt_count < 0:
            raise ConfigError(f"shared_prompt_count must be >= 0, got {self.shared_prompt_count}")


def target_assignment(src_speakers, target_speakers) -> dict:
    """Assign one target speaker per source speaker, round-robin.

    Sources are taken in sorted order, targets in the given order, so the
    assignment is a pure function of the two lists.
    """
    targets = list(target_speakers)
    if not targets:
        raise ConfigError("target_speakers must not be empty")
    return {s: targets[i % len(targets)] for i, s in enumerate(sorted(set(src_speakers)))}


def build_eval_plan(
    gt_manifest: Manifest,
    gen_manifest: Manifest,
    target_speakers,
    config: PlanConfig = PlanConfig(),
) -> list:
    """Pair every generated utterance with its reference utterances.

    Each generated record names its source speaker and the source
    utterance index it was produced from; the target speaker follows from
    the round-robin assignment. Similarity and PPG pairs exist for shared
    prompt indices only and run in both directions against the reference
    utterance with the same index. WER pairs are sampled per source
    speaker (config.wer_per_speaker of them, by config.seed) from all
    generated utterances and compare against the source transcript.

    Raises:
        DataError: a content-matched reference utterance is missing.
    """
    src_speakers = sorted({rec.speaker_id for rec in gen_manifest})
    assignment = target_assignment(src_speakers, target_speakers)
    pairs: dict = {}

    def add(gen_utt, ref_utt, direction, metrics):
        key = (gen_utt, direction, ref_utt)
        pairs.setdefault(key, set()).update(metrics)

    for rec in sorted(gen_manifest, key=lambda r: r.utt_id):
        if rec.utterance_index >= config.shared_prompt_count:
            continue
        src_ref = gt_manifest.utterance(rec.speaker_id, rec.utterance_index)
        tgt_ref = gt_manifest.utterance(assignment[rec.speaker_id], rec.utterance_index)
        add(rec.utt_id, src_ref.utt_id, "to_source", SIMILARITY_METRICS)
        add(rec.utt_id, tgt_ref.utt_id, "to_target", SIMILARITY_METRICS)

    for speaker in src_speakers:
        recs = gen_manifest.records_for_speaker(speaker)
        size = min(config.wer_per_speaker, len(recs))
        rng = np.random.default_rng(stable_seed(config.seed, "wer", speaker))
        chosen = sorted(rng.choice(len(recs), size=size, replace=False).tolist())
        for i in chosen:
            rec = recs[i]
            src_ref = gt_manifest.utterance(rec.speaker_id, rec.utterance_index)
            add(rec.utt_id, src_ref.utt_id, "to_source", {"wer"})

    return [
        EvalPair(gen, ref, direction, frozenset(metrics))
        for (gen, direction, ref), metrics in sorted(pairs.items())
    ]


# ---------------------------------------------------------------------------
# Artifact access


class PpgDirectory(Mapping):
    """Lazy utt_id -> PpgSequence mapping over a directory of posterior files."""

    def __init__(self, root, *, cache_size: int = 16):
        self._root = Path(root)
        if not self._root.is_dir():
            raise DataError(f"posterior directory not found: {self._root}")
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size

    def _path(self, utt_id: str) -> Path:
        return self._root / f"{utt_id}.ftr"

    def __contains__(self, utt_id) -> bool:
        return self._path(utt_id).is_file()

    def __getitem__(self, utt_id: str) -> PpgSequence:
        if utt_id in self._cache:
            self._cache.move_to_end(utt_id)
            return self._cache[utt_id]
        path = self._path(utt_id)
        if not path.is_file():
            raise KeyError(utt_id)
        seq = corpus.load_ppg_file(path)
        self._cache[utt_id] = seq
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return seq

    def __iter__(self):
        return (p.stem for p in sorted(self._root.glob("*.ftr")))

    def __len__(self) -> int:
        return sum(1 for _ in self)


@dataclass
class MetricInputs:
    """Artifact tables backing the metrics; any table may be absent.

    An absent table nulls its metric in the report. A table that is
    present but misses a referenced utterance is an error: partial tables
    would silently skew the means.
    """

    accent_embeddings: Mapping | None = None
    speaker_embeddings: Mapping | None = None
    ppgs: Mapping | None = None
    transcripts: Mapping | None = None
    js_base: float = 2.0

    _TABLES = {
        "accent_sim": "accent_embeddings",
        "speaker_sim": "speaker_embeddings",
        "ppg": "ppgs",
        "wer": "transcripts",
    }

    def table(self, metric: str):
        return getattr(self, self._TABLES[metric])

    def available(self, metric: str) -> bool:
        return self.table(metric) is not None

    def lookup(self, metric: str, utt_id: str):
        table = self.table(metric)
        if utt_id not in table:
            raise DataError(f"{self._TABLES[metric]} table has no entry for {utt_id!r}")
        return table[utt_id]


# ---------------------------------------------------------------------------
# Report


@dataclass
class PairResult:
    generated_utt: str
    reference_utt: str
    direction: str
    metric: str
    value: float | None


@dataclass
class BoundResult:
    metric: str
    lower: float | None
    upper: float | None
    upper_missing: bool = False


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)
    means: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    nulled_metrics: list = field(default_factory=list)
    pair_count: int = 0
    wer_pooling: str = "pooled"


def _mean(values) -> float | None:
    values = list(values)
    if not values:
        return None
    return sum(values) / len(values)


def _pair_value(metric: str, pair: EvalPair, inputs: MetricInputs):
    """Evaluate one metric on one pair; WER returns (rate, errors, length)."""
    gen = inputs.lookup(metric, pair.generated_utt)
    ref = inputs.lookup(metric, pair.reference_utt)
    if metric in ("accent_sim", "speaker_sim"):
        return cosine_similarity(gen, ref)
    if metric == "ppg":
        return ppg_js_distance(gen, ref, base=inputs.js_base)
    if metric == "wer":
        errors, length = wer_counts(ref, gen)  # generated side is the hypothesis
        return errors / length, errors, length
    raise ConfigError(f"unknown metric {metric!r}")


def metric_report(plan, inputs: MetricInputs, *, wer_pooling: str = "pooled") -> MetricReport:
    """Evaluate a pairing plan into per-pair rows, means, and the summary.

    Metrics without an input table are nulled (explicit None values) and
    listed in nulled_metrics. The summary holds the conventional report
    layout: accent and speaker similarity per direction, PPG distance and
    WER against the source.
    """
    if wer_pooling not in ("pooled", "averaged"):
        raise ConfigError(f"wer_pooling must be 'pooled' or 'averaged', got {wer_pooling!r}")
    report = MetricReport(pair_count=len(plan), wer_pooling=wer_pooling)
    values: dict = {}
    wer_totals: dict = {}
    nulled = set()
    for pair in plan:
        for metric in sorted(pair.metric_set):
            if not inputs.available(metric):
                nulled.add(metric)
                report.rows.append(
                    PairResult(pair.generated_utt, pair.reference_utt, pair.direction, metric, None)
                )
                continue
            out = _pair_value(metric, pair, inputs)
            if metric == "wer":
                value, errors, length = out
                totals = wer_totals.setdefault(pair.direction, [0, 0])
                totals[0] += errors
                totals[1] += length
            else:
                value = out
            values.setdefault(metric, {}).setdefault(pair.direction, []).append(value)
            report.rows.append(
                PairResult(pair.generated_utt, pair.reference_utt, pair.direction, metric, value)
            )
    report.nulled_metrics = sorted(nulled)
    for metric in METRIC_NAMES:
        per_dir = values.get(metric, {})
        report.means[metric] = {d: _mean(per_dir.get(d, [])) for d in DIRECTIONS}

    def wer_summary(direction: str) -> float | None:
        if wer_pooling == "averaged":
            return report.means["wer"][direction]
        totals = wer_totals.get(direction)
        if not totals or totals[1] == 0:
            return None
        return totals[0] / totals[1]

    report.summary = {
        "A-SIM (src)": report.means["accent_sim"]["to_source"],
        "A-SIM (tgt)": report.means["accent_sim"]["to_target"],
        "S-SIM (src)": report.means["speaker_sim"]["to_source"],
        "S-SIM (tgt)": report.means["speaker_sim"]["to_target"],
        "PPG": report.means["ppg"]["to_source"],
        "WER": wer_summary("to_source"),
    }
    return report


# ---------------------------------------------------------------------------
# Bounds


def _bound_value(metric: str, pairs, inputs: MetricInputs, wer_pooling: str) -> float:
    """Score a bound pairing list [(measured_utt, reference_utt), ...]."""
    if metric == "wer":
        counts = []
        for measured, ref in pairs:
            hyp = inputs.lookup(metric, measured)
            ref_text = inputs.lookup(metric, ref)
            counts.append(wer_counts(ref_text, hyp))
        if wer_pooling == "averaged":
            return sum(e / n for e, n in counts) / len(counts)
        return sum(e for e, _ in counts) / sum(n for _, n in counts)
    vals = []
    for measured, ref in pairs:
        a = inputs.lookup(metric, measured)
        b = inputs.lookup(metric, ref)
        if metric == "ppg":
            vals.append(ppg_js_distance(a, b, base=inputs.js_base))
        else:
            vals.append(cosine_similarity(a, b))
    return sum(vals) / len(vals)


def compute_bounds(
    metric: str,
    gt_manifest: Manifest,
    target_speakers,
    inputs: MetricInputs,
    *,
    copysyn_manifest: Manifest | None = None,
    source_speakers=None,
    config: PlanConfig = PlanConfig(),
    wer_pooling: str = "pooled",
) -> BoundResult:
    """Anchor one metric with its chance-level and ceiling pairings.

    The lower bound compares source ground truth against the assigned
    target speaker's ground truth on the shared prompts. The upper bound
    compares copy-synthesis output against the ground truth it resynthesized:
    source-side for accent similarity, PPG, and WER; target-side for
    speaker similarity. Without a copy-synthesis manifest the upper bound
    is omitted and flagged.

    source_speakers scopes the source side to the speakers actually
    converted; by default every non-target speaker in the manifest counts,
    which is only right when the manifest covers just the evaluation
    speakers.
    """
    if metric not in METRIC_NAMES:
        raise ConfigError(f"unknown metric {metric!r}")
    if not inputs.available(metric):
        raise DataError(f"no input table for metric {metric!r}")
    targets = list(target_speakers)
    if source_speakers is None:
        src_speakers = sorted(set(gt_manifest.speakers) - set(targets))
    else:
        src_speakers = sorted(set(source_speakers) - set(targets))
    if not src_speakers:
        raise DataError("no source speakers left after removing targets")
    assignment = target_assignment(src_speakers, targets)
    prompt_range = range(config.shared_prompt_count)

    lower_pairs = []
    for speaker in src_speakers:
        tgt = assignment[speaker]
        for k in prompt_range:
            lower_pairs.append(
                (gt_manifest.utterance(speaker, k).utt_id, gt_manifest.utterance(tgt, k).utt_id)
            )
    if not lower_pairs:
        raise DataError("no shared prompts available for bound pairings")
    lower = _bound_value(metric, lower_pairs, inputs, wer_pooling)

    if copysyn_manifest is None:
        logger.warning("no copy-synthesis manifest: upper bound for %s omitted", metric)
        return BoundResult(metric=metric, lower=lower, upper=None, upper_missing=True)

    # Speaker similarity anchors on the target side, everything else on the
    # source side.
    upper_speakers = targets if metric == "speaker_sim" else src_speakers
    upper_pairs = []
    for speaker in sorted(set(upper_speakers)):
        for k in prompt_range:
            upper_pairs.append(
                (
                    copysyn_manifest.utterance(speaker, k).utt_id,
                    gt_manifest.utterance(speaker, k).utt_id,
                )
            )
    upper = _bound_value(metric, upper_pairs, inputs, wer_pooling)
    return BoundResult(metric=metric, lower=lower, upper=upper)


def compute_all_bounds(
    gt_manifest: Manifest,
    target_speakers,
    inputs: MetricInputs,
    *,
    copysyn_manifest: Manifest | None = None,
    source_speakers=None,
    config: PlanConfig = PlanConfig(),
    wer_pooling: str = "pooled",
) -> dict:
    """Bounds for every metric whose input table is present."""
    out = {}
    for metric in METRIC_NAMES:
        if not inputs.available(metric):
            continue
        out[metric] = compute_bounds(
            metric,
            gt_manifest,
            target_speakers,
            inputs,
            copysyn_manifest=copysyn_manifest,
            source_speakers=source_speakers,
            config=config,
            wer_pooling=wer_pooling,
        )
    return out


# ---------------------------------------------------------------------------
# Serialization


def plan_payload(plan) -> list:
    return [
        {
            "generated_utt": p.generated_utt,
            "reference_utt": p.reference_utt,
            "direction": p.direction,
            "metric_set": sorted(p.metric_set),
        }
        for p in plan
    ]


def metric_report_payload(report: MetricReport, extra: dict | None = None) -> dict:
    payload = {
        "kind": "metric_report",
        "pair_count": report.pair_count,
        "wer_pooling": report.wer_pooling,
        "nulled_metrics": report.nulled_metrics,
        "rows": [
            {
                "generated_utt": r.generated_utt,
                "reference_utt": r.reference_utt,
                "direction": r.direction,
                "metric": r.metric,
                "value": r.value,
            }
            for r in report.rows
        ],
        "means": report.means,
        "summary": report.summary,
        "bounds": {
            m: {"lower": b.lower, "upper": b.upper, "upper_missing": b.upper_missing}
            for m, b in sorted(report.bounds.items())
        },
    }
    if extra:
        payload.update(extra)
    return payload


def write_metric_report_json(report: MetricReport, path, extra: dict | None = None) -> None:
    write_json(metric_report_payload(report, extra), path)


def _csv_cell(value) -> str:
    return "" if value is None else repr(float(value))


def write_metric_report_csv(report: MetricReport, path) -> None:
    """Summary CSV: one row of metric values plus bound rows when present."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", *SUMMARY_COLUMNS])
    writer.writerow(["evaluated", *(_csv_cell(report.summary.get(c)) for c in SUMMARY_COLUMNS)])
    if report.bounds:
        by_col = {
            "A-SIM (src)": "accent_sim",
            "A-SIM (tgt)": "accent_sim",
            "S-SIM (src)": "speaker_sim",
            "S-SIM (tgt)": "speaker_sim",
            "PPG": "ppg",
            "WER": "wer",
        }
        for label, pick in (("lower_bound", "lower"), ("upper_bound", "upper")):
            cells = []
            for col in SUMMARY_COLUMNS:
                bound = report.bounds.get(by_col[col])
                cells.append(_csv_cell(getattr(bound, pick)) if bound else "")
            writer.writerow([label, *cells])
    atomic_write_bytes(buf.getvalue().encode("utf-8"), path)


def load_transcripts(path) -> dict:
    """Read utt_id -> text from a JSON Lines file of {utt_id, text} records."""
    out: dict = {}
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict) or "utt_id" not in raw or "text" not in raw:
                raise DataError(f"{path}:{lineno}: expected utt_id and text fields")
            if raw["utt_id"] in out:
                raise DataError(f"{path}:{lineno}: duplicate utt_id {raw['utt_id']!r}")
            if not isinstance(raw["text"], str):
                raise DataError(f"{path}:{lineno}: text must be a string")
            out[raw["utt_id"]] = raw["text"]
    if not out:
        raise DataError(f"{path}: no transcript records")
    return out
