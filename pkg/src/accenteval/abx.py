"""ABX discrimination over frame sequences, with cell-constrained triplets.

A triplet (a, b, x) asks whether x is closer to a than to b under a
sequence distance. Triplets are grouped into cells whose members agree on
the BY categories and differ on the ON category; the ACROSS rule controls
which speakers may supply each leg. Cell scores average triplet outcomes
and the headline number macro-averages the cells.

Three conditions are supported:

* accent: a and x share an accent, b has another; all same word; the three
  segments come from three different speakers.
* speaker: a and x are two occurrences of one word by one speaker, b is
  the same word from another speaker of the same accent.
* phone: a and x share a phone, b has another, all in the same phonetic
  context (previous and next phone); a and b come from one speaker and x
  from a different one.

Sequence distance is dynamic time warping over the angular distance
between frames, normalized by alignment path length.
"""

import csv
import io
import logging
from collections import Counter, OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import corpus, quantizer
from ._dtw import angular_cost_matrix, min_mean_path
from ._util import atomic_write_bytes, stable_seed, write_json
from .corpus import FeatureSequence, Manifest, Segment
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Frame and sequence distances


def frame_distance(u, v) -> float:
    """Angular distance between two frames: arccos of cosine similarity over pi.

    Ranges over [0, 1]; 0 for parallel, 0.5 for orthogonal, 1 for opposed.
    If either frame is all zeros the distance is 0.5.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape or u.size == 0:
        raise DataError(f"frames must be equal-length 1-D vectors, got {u.shape} and {v.shape}")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise DataError("non-finite frame values")
    return float(angular_cost_matrix(u[None, :], v[None, :])[0, 0])


def _as_frames(seq) -> np.ndarray:
    if isinstance(seq, FeatureSequence):
        return seq.frames
    arr = np.asarray(seq)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"expected a non-empty (T, D) frame matrix, got shape {arr.shape}")
    return arr


def dtw_distance(a, b) -> float:
    """DTW alignment cost between two frame sequences.

    The value is the mean angular frame distance along the cheapest
    monotone alignment path (steps: diagonal, right, down), so it stays in
    [0, 1] and is symmetric. Identical sequences score near zero, not an
    exact zero: the cosine of a frame with itself can round slightly
    below one before the arccos.
    """
    fa = _as_frames(a)
    fb = _as_frames(b)
    if fa.shape[1] != fb.shape[1]:
        raise DataError(f"feature dimensions differ: {fa.shape[1]} != {fb.shape[1]}")
    return min_mean_path(angular_cost_matrix(fa, fb))


# ---------------------------------------------------------------------------
# Conditions, cells, triplets


@dataclass(frozen=True)
class AbxCondition:
    """Category constraints for one ABX setup; use condition_from_name."""

    name: str
    on: str
    by: tuple
    across: tuple
    key_fields: tuple


_CONDITIONS = {
    "accent": AbxCondition(
        name="accent",
        on="accent",
        by=("word",),
        across=("speaker",),
        key_fields=("accent_a", "accent_b", "word"),
    ),
    "speaker": AbxCondition(
        name="speaker",
        on="speaker",
        by=("word", "accent"),
        across=(),
        key_fields=("speaker_a", "speaker_b", "word", "accent"),
    ),
    "phone": AbxCondition(
        name="phone",
        on="phone",
        by=("phone", "context"),
        across=("speaker",),
        key_fields=("phone_a", "phone_b", "prev", "next"),
    ),
}


def condition_from_name(name: str) -> AbxCondition:
    try:
        return _CONDITIONS[name]
    except KeyError:
        raise ConfigError(f"unknown ABX condition {name!r}, expected one of {sorted(_CONDITIONS)}") from None


def accent_condition() -> AbxCondition:
    return _CONDITIONS["accent"]


def speaker_condition() -> AbxCondition:
    return _CONDITIONS["speaker"]


def phone_condition() -> AbxCondition:
    return _CONDITIONS["phone"]


@dataclass(frozen=True)
class SegmentRef:
    """Addressable slice of one utterance; hashable so distances can be cached."""

    utt_id: str
    label: str
    start_s: float
    end_s: float
    prev_label: str | None = None
    next_label: str | None = None

    @property
    def order_key(self):
        return (self.utt_id, self.start_s, self.end_s, self.label)


@dataclass(frozen=True)
class Triplet:
    a: SegmentRef
    b: SegmentRef
    x: SegmentRef


@dataclass
class AbxCell:
    """All sampled triplets sharing one cell key, plus the score once known."""

    key: tuple
    triplets: list
    score: float | None = None

    @property
    def triplet_count(self) -> int:
        return len(self.triplets)


@dataclass(frozen=True)
class SamplingCaps:
    """Bounds on enumeration; cells larger than the cap are subsampled."""

    max_per_cell: int = 500

    def __post_init__(self):
        if self.max_per_cell < 1:
            raise ConfigError(f"max_per_cell must be >= 1, got {self.max_per_cell}")


@dataclass
class AbxReport:
    condition: str
    key_fields: tuple
    cells: list
    aggregate: float
    total_triplets: int
    dropped_cells: int = 0


# ---------------------------------------------------------------------------
# Triplet enumeration


def _sample_cell(blocks, cap: int, rng: np.random.Generator) -> list:
    """Draw up to cap triplets from a cell described as decodable index blocks.

    blocks is a list of (count, decode) pairs; the cell's triplet space is
    the disjoint union of the block index ranges. Small cells are
    enumerated outright; large ones get a uniform without-replacement
    sample by rejection on a flat index.
    """
    total = sum(count for count, _ in blocks)
    if total == 0:
        return []
    if total <= cap:
        out = []
        for count, decode in blocks:
            out.extend(decode(i) for i in range(count))
        return out
    seen = set()
    picks = []
    draws = 0
    while len(picks) < cap and draws < 50 * cap:
        draws += 1
        t = int(rng.integers(total))
        if t in seen:
            continue
        seen.add(t)
        picks.append(t)
    picks.sort()
    out = []
    for t in picks:
        for count, decode in blocks:
            if t < count:
                out.append(decode(t))
                break
            t -= count
    return out


def _pool_items(manifest, segments, min_utterance_index, words):
    items = []
    for rec in sorted(manifest.records, key=lambda r: r.utt_id):
        if rec.utterance_index < min_utterance_index:
            continue
        for seg in segments.get(rec.utt_id, ()):
            if words is not None and seg.label not in words:
                continue
            ref = SegmentRef(
                rec.utt_id, seg.label, seg.start_s, seg.end_s, seg.prev_label, seg.next_label
            )
            items.append((ref, rec.speaker_id, rec.accent_region))
    return items


def _accent_cells(items, cap, seed):
    by_word: dict = {}
    for ref, speaker, accent in items:
        by_word.setdefault(ref.label, {}).setdefault(accent, {}).setdefault(speaker, []).append(ref)
    cells = []
    for word in sorted(by_word):
        accents = by_word[word]
        for acc_a in sorted(accents):
            spk_items = {s: sorted(refs, key=lambda r: r.order_key) for s, refs in accents[acc_a].items()}
            speakers_a = sorted(spk_items)
            if len(speakers_a) < 2:
                continue
            for acc_b in sorted(accents):
                if acc_b == acc_a:
                    continue
                b_items = []
                for spk in sorted(accents[acc_b]):
                    b_items.extend(sorted(accents[acc_b][spk], key=lambda r: r.order_key))
                if not b_items:
                    continue
                nb = len(b_items)
                blocks = []
                for sx in speakers_a:
                    for sa in speakers_a:
                        if sa == sx:
                            continue
                        xs, aas = spk_items[sx], spk_items[sa]

                        def decode(t, xs=xs, aas=aas, na=len(aas)):
                            i_x, r = divmod(t, na * nb)
                            i_a, i_b = divmod(r, nb)
                            return Triplet(a=aas[i_a], b=b_items[i_b], x=xs[i_x])

                        blocks.append((len(xs) * len(aas) * nb, decode))
                key = (acc_a, acc_b, word)
                rng = np.random.default_rng(stable_seed(seed, "accent", key))
                triplets = _sample_cell(blocks, cap, rng)
                if triplets:
                    cells.append(AbxCell(key=key, triplets=triplets))
    cells.sort(key=lambda c: c.key)
    return cells


def _speaker_cells(items, cap, seed):
    by_group: dict = {}
    for ref, speaker, accent in items:
        by_group.setdefault((ref.label, accent), {}).setdefault(speaker, []).append(ref)
    cells = []
    for word, accent in sorted(by_group):
        spk_items = {
            s: sorted(refs, key=lambda r: r.order_key)
            for s, refs in by_group[(word, accent)].items()
        }
        speakers = sorted(spk_items)
        for spk_a in speakers:
            items_a = spk_items[spk_a]
            na = len(items_a)
            if na < 2:
                continue  # x and a must be two different occurrences
            for spk_b in speakers:
                if spk_b == spk_a:
                    continue
                items_b = spk_items[spk_b]
                nb = len(items_b)

                def decode(t, items_a=items_a, items_b=items_b, na=na, nb=nb):
                    i_pair, i_b = divmod(t, nb)
                    i_x, j = divmod(i_pair, na - 1)
                    i_a = j + 1 if j >= i_x else j
                    return Triplet(a=items_a[i_a], b=items_b[i_b], x=items_a[i_x])

                key = (spk_a, spk_b, word, accent)
                rng = np.random.default_rng(stable_seed(seed, "speaker", key))
                triplets = _sample_cell([(na * (na - 1) * nb, decode)], cap, rng)
                if triplets:
                    cells.append(AbxCell(key=key, triplets=triplets))
    cells.sort(key=lambda c: c.key)
    return cells


def _phone_cells(items, cap, seed):
    by_context: dict = {}
    for ref, speaker, accent in items:
        ctx = (ref.prev_label, ref.next_label)
        if ctx[0] is None or ctx[1] is None:
            raise DataError(f"phone segment {ref.label!r} in {ref.utt_id!r} lacks context labels")
        by_context.setdefault(ctx, {}).setdefault(ref.label, {}).setdefault(speaker, []).append(ref)
    cells = []
    for ctx in sorted(by_context):
        phones = by_context[ctx]
        for phone_a in sorted(phones):
            a_by_spk = {s: sorted(r, key=lambda x: x.order_key) for s, r in phones[phone_a].items()}
            for phone_b in sorted(phones):
                if phone_b == phone_a:
                    continue
                b_by_spk = {s: sorted(r, key=lambda x: x.order_key) for s, r in phones[phone_b].items()}
                blocks = []
                # a and b come from one speaker; x is the same phone as a
                # from any other speaker.
                for spk in sorted(set(a_by_spk) & set(b_by_spk)):
                    x_pool = []
                    for other in sorted(a_by_spk):
                        if other != spk:
                            x_pool.extend(a_by_spk[other])
                    if not x_pool:
                        continue
                    aas, bbs = a_by_spk[spk], b_by_spk[spk]

                    def decode(t, aas=aas, bbs=bbs, x_pool=x_pool, nb=len(bbs), nx=len(x_pool)):
                        i_a, r = divmod(t, nb * nx)
                        i_b, i_x = divmod(r, nx)
                        return Triplet(a=aas[i_a], b=bbs[i_b], x=x_pool[i_x])

                    blocks.append((len(aas) * len(bbs) * len(x_pool), decode))
                if not blocks:
                    continue
                key = (phone_a, phone_b, ctx[0], ctx[1])
                rng = np.random.default_rng(stable_seed(seed, "phone", key))
                triplets = _sample_cell(blocks, cap, rng)
                if triplets:
                    cells.append(AbxCell(key=key, triplets=triplets))
    cells.sort(key=lambda c: c.key)
    return cells


def enumerate_triplets(
    condition: AbxCondition,
    manifest: Manifest,
    segments: dict,
    *,
    caps: SamplingCaps = SamplingCaps(),
    seed: int = 0,
    min_utterance_index: int = corpus.SHARED_PROMPT_UTTERANCES,
    words=None,
) -> list:
    """Build every cell with at least one valid triplet.

    Args:
        condition: one of the three ABX conditions.
        manifest: utterances in scope; callers pre-filter the split.
        segments: utt_id -> list of Segment for the condition's tier
            (word tier for accent and speaker, phone tier for phone).
        caps: per-cell triplet budget; larger cells are sampled by seed.
        seed: base seed; each cell derives its own stream from it, so the
            sample does not depend on enumeration order.
        min_utterance_index: utterances below this index are excluded from
            the pool (they share elicitation content across speakers).
        words: optional label whitelist, used to restrict word cells.

    Returns:
        Cells sorted by key, each holding at most caps.max_per_cell
        triplets. Cells with no valid triplet are omitted.
    """
    items = _pool_items(manifest, segments, min_utterance_index, words)
    if condition.name == "accent":
        return _accent_cells(items, caps.max_per_cell, seed)
    if condition.name == "speaker":
        return _speaker_cells(items, caps.max_per_cell, seed)
    if condition.name == "phone":
        return _phone_cells(items, caps.max_per_cell, seed)
    raise ConfigError(f"unknown condition {condition.name!r}")


def verify_triplet_constraints(
    cells,
    condition: AbxCondition,
    manifest: Manifest,
    *,
    min_utterance_index: int = corpus.SHARED_PROMPT_UTTERANCES,
) -> list:
    """Independently re-check every triplet against its condition and cell key.

    Returns a list of human-readable violation strings; an empty list means
    the enumeration is sound.
    """
    violations = []

    def fail(cell, triplet, msg):
        violations.append(f"cell {cell.key}: {msg} in triplet {triplet}")

    for cell in cells:
        for t in cell.triplets:
            recs = {}
            for leg in ("a", "b", "x"):
                ref = getattr(t, leg)
                rec = manifest.record(ref.utt_id)
                recs[leg] = rec
                if rec.utterance_index < min_utterance_index:
                    fail(cell, t, f"{leg} uses excluded utterance index {rec.utterance_index}")
            a, b, x = t.a, t.b, t.x
            spk = {leg: recs[leg].speaker_id for leg in recs}
            acc = {leg: recs[leg].accent_region for leg in recs}
            if condition.name == "accent":
                acc_a, acc_b, word = cell.key
                if not (a.label == b.label == x.label == word):
                    fail(cell, t, "word mismatch")
                if not (acc["a"] == acc["x"] == acc_a):
                    fail(cell, t, "a/x accent does not match the cell")
                if acc["b"] != acc_b or acc_b == acc_a:
                    fail(cell, t, "b accent does not contrast the cell")
                if len({spk["a"], spk["b"], spk["x"]}) != 3:
                    fail(cell, t, "speakers not pairwise distinct")
            elif condition.name == "speaker":
                spk_a, spk_b, word, accent = cell.key
                if not (a.label == b.label == x.label == word):
                    fail(cell, t, "word mismatch")
                if not (acc["a"] == acc["b"] == acc["x"] == accent):
                    fail(cell, t, "accent mismatch")
                if spk["a"] != spk_a or spk["x"] != spk_a or spk["b"] != spk_b:
                    fail(cell, t, "speaker roles do not match the cell")
                if spk_a == spk_b:
                    fail(cell, t, "cell does not contrast speakers")
                if a == x:
                    fail(cell, t, "a and x are the same occurrence")
            elif condition.name == "phone":
                phone_a, phone_b, prev, nxt = cell.key
                if a.label != phone_a or x.label != phone_a or b.label != phone_b:
                    fail(cell, t, "phone labels do not match the cell")
                if phone_a == phone_b:
                    fail(cell, t, "cell does not contrast phones")
                for leg in ("a", "b", "x"):
                    ref = getattr(t, leg)
                    if ref.prev_label != prev or ref.next_label != nxt:
                        fail(cell, t, f"{leg} context does not match the cell")
                if spk["a"] != spk["b"]:
                    fail(cell, t, "a and b must share a speaker")
                if spk["x"] == spk["a"]:
                    fail(cell, t, "x must come from a different speaker")
    return violations


# ---------------------------------------------------------------------------
# Scoring


def score_triplet(triplet: Triplet, get_features, *, distance=dtw_distance, cache=None) -> float:
    """Score one triplet: 0 if x is nearer to a, 1 if nearer to b, 0.5 on a tie.

    Only the ordering of the two distances matters, so any strictly
    monotone transform of the distance yields the same outcome.
    """

    def pair(u: SegmentRef, v: SegmentRef) -> float:
        if cache is None:
            return distance(get_features(u), get_features(v))
        key = (u, v) if u.order_key <= v.order_key else (v, u)
        if key not in cache:
            cache[key] = distance(get_features(key[0]), get_features(key[1]))
        return cache[key]

    d_ax = pair(triplet.a, triplet.x)
    d_bx = pair(triplet.b, triplet.x)
    if d_ax < d_bx:
        return 0.0
    if d_ax > d_bx:
        return 1.0
    return 0.5


def _score_cell(cell: AbxCell, get_features, distance=dtw_distance) -> float:
    cache: dict = {}
    total = 0.0
    for triplet in cell.triplets:
        total += score_triplet(triplet, get_features, distance=distance, cache=cache)
    return total / len(cell.triplets)


def _score_cell_task(cell, get_features):
    return cell.key, _score_cell(cell, get_features)


def abx_error_rate(cells, get_features, *, condition=None, workers: int = 1) -> AbxReport:
    """Score each cell and macro-average the cell scores.

    Every cell weighs the same in the aggregate regardless of its triplet
    count. Scoring is independent per cell, so the worker count changes
    runtime only, never the result.

    Raises:
        DataError: empty cell list or a cell without triplets.
    """
    cells = sorted(cells, key=lambda c: c.key)
    if not cells:
        raise DataError("no ABX cells to score")
    for cell in cells:
        if not cell.triplets:
            raise DataError(f"cell {cell.key} has no triplets")
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(partial(_score_cell_task, get_features=get_features), cells))
        scores = dict(results)
        for cell in cells:
            cell.score = scores[cell.key]
    else:
        for cell in cells:
            cell.score = _score_cell(cell, get_features)
    aggregate = sum(c.score for c in cells) / len(cells)
    condition_name = condition.name if condition is not None else ""
    key_fields = condition.key_fields if condition is not None else ()
    return AbxReport(
        condition=condition_name,
        key_fields=key_fields,
        cells=cells,
        aggregate=aggregate,
        total_triplets=sum(c.triplet_count for c in cells),
    )


# ---------------------------------------------------------------------------
# Accent and word combination selection


@dataclass(frozen=True)
class CombinationEntry:
    accent_a: str
    accent_b: str
    word: str
    train_score: float

    @property
    def cell_key(self) -> tuple:
        return (self.accent_a, self.accent_b, self.word)


@dataclass(frozen=True)
class CombinationList:
    """Accent-pair and word cells retained for scoring, with selection metadata."""

    entries: tuple
    p_percent: float
    candidate_count: int


def select_accent_word_combinations(
    train_manifest: Manifest,
    segments: dict,
    get_features,
    *,
    top_n_words: int = 100,
    p_percent: float = 10.0,
    caps: SamplingCaps = SamplingCaps(),
    seed: int = 0,
    min_utterance_index: int = corpus.SHARED_PROMPT_UTTERANCES,
    workers: int = 1,
) -> CombinationList:
    """Pick the accent-pair and word cells that discriminate best on train data.

    The candidate grid is every ordered accent pair crossed with the most
    frequent train words that still yield at least one valid triplet. Each
    candidate cell is scored with the selector representation on the train
    split, and the lowest-scoring p percent survive (lower ABX error means
    the word separates the accents more cleanly). The retained count is
    round(p_percent / 100 * candidates); score ties break lexicographically
    by cell key.

    Word frequencies count every train transcript; the elicitation-passage
    exclusion applies to triplet pools only.

    Raises:
        DataError: fewer than two accents in the train split, or no
            candidate cell with a valid triplet.
    """
    if not (0.0 < p_percent <= 100.0):
        raise ConfigError(f"p_percent must be in (0, 100], got {p_percent}")
    if len(train_manifest.accents) < 2:
        raise DataError(
            f"accent selection needs at least two accent regions, "
            f"got {train_manifest.accents}"
        )
    counts: Counter = Counter()
    for rec in train_manifest:
        counts.update(corpus.tokenize_transcript(rec.text))
    if not counts:
        raise DataError("train transcripts contain no words")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    top_words = {word for word, _ in ranked[:top_n_words]}

    cells = enumerate_triplets(
        accent_condition(),
        train_manifest,
        segments,
        caps=caps,
        seed=seed,
        min_utterance_index=min_utterance_index,
        words=top_words,
    )
    if not cells:
        raise DataError("no candidate accent/word cell has a valid triplet")
    report = abx_error_rate(cells, get_features, condition=accent_condition(), workers=workers)
    scored = sorted(report.cells, key=lambda c: (c.score, c.key))
    keep = round(p_percent / 100.0 * len(scored))
    entries = tuple(
        CombinationEntry(accent_a=c.key[0], accent_b=c.key[1], word=c.key[2], train_score=c.score)
        for c in scored[:keep]
    )
    return CombinationList(entries=entries, p_percent=p_percent, candidate_count=len(scored))


def accent_abx_score(
    test_manifest: Manifest,
    segments: dict,
    combinations: CombinationList,
    get_features,
    *,
    caps: SamplingCaps = SamplingCaps(),
    seed: int = 0,
    min_utterance_index: int = corpus.SHARED_PROMPT_UTTERANCES,
    workers: int = 1,
) -> AbxReport:
    """Score the retained combinations on the test split.

    Cells are rebuilt from test speakers; a retained combination with no
    valid test triplet is dropped with a warning and counted in the
    report's dropped_cells.

    Raises:
        DataError: every retained combination is empty on the test split.
    """
    words = {entry.word for entry in combinations.entries}
    wanted = {entry.cell_key for entry in combinations.entries}
    cells = enumerate_triplets(
        accent_condition(),
        test_manifest,
        segments,
        caps=caps,
        seed=seed,
        min_utterance_index=min_utterance_index,
        words=words,
    )
    cells = [c for c in cells if c.key in wanted]
    found = {c.key for c in cells}
    dropped = sorted(wanted - found)
    for key in dropped:
        logger.warning("combination %s has no valid test triplet, dropped", key)
    if not cells:
        raise DataError("no retained combination has a valid test triplet")
    report = abx_error_rate(cells, get_features, condition=accent_condition(), workers=workers)
    report.dropped_cells = len(dropped)
    return report


# ---------------------------------------------------------------------------
# Feature access


class SegmentFeatureProvider:
    """Resolve segment references to frame matrices.

    Utterance features load lazily from the manifest's feature files,
    optionally pass through a codebook (token embedding), and get sliced
    per segment. A bounded cache keeps recent utterances in memory. The
    object pickles without its cache, so it can cross process boundaries
    for parallel scoring.
    """

    def __init__(
        self,
        manifest: Manifest,
        *,
        feature_root=None,
        codebook: quantizer.Codebook | None = None,
        token_embedding: str = "centroid",
        cache_size: int = 128,
    ):
        if token_embedding not in ("centroid", "one_hot"):
            raise ConfigError(f"token_embedding must be 'centroid' or 'one_hot', got {token_embedding!r}")
        self._manifest = manifest
        self._feature_root = feature_root
        self._codebook = codebook
        self._token_embedding = token_embedding
        self._cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = OrderedDict()
        return state

    def utterance_features(self, utt_id: str) -> FeatureSequence:
        if utt_id in self._cache:
            self._cache.move_to_end(utt_id)
            return self._cache[utt_id]
        rec = self._manifest.record(utt_id)
        seq = corpus.read_feature_file(self._manifest.resolve_path(rec.feature_path, self._feature_root))
        if self._codebook is not None:
            tokens = quantizer.quantize(seq, self._codebook)
            if self._token_embedding == "centroid":
                seq = quantizer.tokens_to_vectors(tokens, self._codebook)
            else:
                seq = quantizer.tokens_to_onehot(tokens)
        self._cache[utt_id] = seq
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return seq

    def __call__(self, ref: SegmentRef) -> np.ndarray:
        seq = self.utterance_features(ref.utt_id)
        segment = Segment(
            ref.utt_id, ref.label, ref.start_s, ref.end_s,
            prev_label=ref.prev_label, next_label=ref.next_label,
        )
        return corpus.slice_segment(seq, segment).frames


# ---------------------------------------------------------------------------
# Report output


def abx_report_payload(report: AbxReport, extra: dict | None = None) -> dict:
    payload = {
        "kind": "abx_report",
        "condition": report.condition,
        "aggregate": report.aggregate,
        "cell_count": len(report.cells),
        "total_triplets": report.total_triplets,
        "dropped_cells": report.dropped_cells,
        "key_fields": list(report.key_fields),
        "cells": [
            {"key": list(c.key), "triplet_count": c.triplet_count, "score": c.score}
            for c in sorted(report.cells, key=lambda c: c.key)
        ],
    }
    if extra:
        payload.update(extra)
    return payload


def write_abx_report_json(report: AbxReport, path, extra: dict | None = None) -> None:
    write_json(abx_report_payload(report, extra), path)


def write_abx_report_csv(report: AbxReport, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*report.key_fields, "triplet_count", "score"])
    for cell in sorted(report.cells, key=lambda c: c.key):
        writer.writerow([*cell.key, cell.triplet_count, repr(float(cell.score))])
    atomic_write_bytes(buf.getvalue().encode("utf-8"), path)


def write_combinations_csv(combinations: CombinationList, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["accent_a", "accent_b", "word", "train_score"])
    for entry in combinations.entries:
        writer.writerow([entry.accent_a, entry.accent_b, entry.word, repr(float(entry.train_score))])
    atomic_write_bytes(buf.getvalue().encode("utf-8"), path)
