import json
import struct

import numpy as np
import pytest

from accenteval import corpus
from accenteval.corpus import (
    FeatureSequence,
    Manifest,
    Segment,
    UtteranceRecord,
    load_alignment_file,
    load_embeddings,
    load_manifest,
    load_ppg_file,
    load_segment_index,
    permuted_accents,
    read_feature_file,
    slice_segment,
    tokenize_transcript,
    validate_manifest,
    write_feature_file,
    write_manifest,
)
from accenteval.errors import DataError


def _record(utt_id="u0", speaker="spk1", accent="Scottish", split="train", index=0, **extra):
    base = dict(
        utt_id=utt_id,
        speaker_id=speaker,
        accent_region=accent,
        split=split,
        text="a b",
        feature_path=f"{utt_id}.ftr",
        utterance_index=index,
    )
    base.update(extra)
    return UtteranceRecord(**base)


class TestFeatureFiles:
    def test_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(7)
        frames = rng.normal(size=(13, 5)).astype(np.float32)
        path = tmp_path / "x.ftr"
        write_feature_file(FeatureSequence(frames, 50.0), path)
        again = read_feature_file(path)
        assert again.frames.tobytes() == frames.tobytes()
        assert again.frame_rate_hz == 50.0

        write_feature_file(again, tmp_path / "y.ftr")
        assert (tmp_path / "y.ftr").read_bytes() == path.read_bytes()

    def test_layout_matches_documented_format(self, tmp_path):
        frames = np.arange(6, dtype=np.float32).reshape(2, 3)
        path = tmp_path / "x.ftr"
        write_feature_file(FeatureSequence(frames, 100.0), path)
        blob = path.read_bytes()
        magic, t, d, rate = struct.unpack("<4sIIf", blob[:16])
        assert (magic, t, d, rate) == (b"FTR1", 2, 3, 100.0)
        assert blob[16:] == frames.tobytes()
        assert len(blob) == 16 + 4 * 6

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ftr"
        path.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(DataError, match="magic"):
            read_feature_file(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "x.ftr"
        write_feature_file(FeatureSequence(np.ones((4, 4), dtype=np.float32), 50.0), path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(DataError, match="truncated"):
            read_feature_file(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "x.ftr"
        write_feature_file(FeatureSequence(np.ones((4, 4), dtype=np.float32), 50.0), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DataError, match="trailing"):
            read_feature_file(path)

    def test_non_finite_values_rejected(self, tmp_path):
        path = tmp_path / "x.ftr"
        header = struct.pack("<4sIIf", b"FTR1", 1, 2, 50.0)
        payload = np.array([[np.inf, 0.0]], dtype="<f4").tobytes()
        path.write_bytes(header + payload)
        with pytest.raises(DataError, match="non-finite"):
            read_feature_file(path)

    def test_sequence_validation(self):
        with pytest.raises(DataError):
            FeatureSequence(np.ones((0, 3), dtype=np.float32), 50.0)
        with pytest.raises(DataError):
            FeatureSequence(np.ones(4, dtype=np.float32), 50.0)
        with pytest.raises(DataError):
            FeatureSequence(np.ones((2, 2), dtype=np.float32), 0.0)
        with pytest.raises(DataError):
            FeatureSequence(np.array([[np.nan]], dtype=np.float32), 50.0)


class TestManifest:
    def test_loads_synthetic_manifest(self, corpus):
        m = corpus.manifest
        assert len(m) == 312
        assert m.accents == ["Scottish", "SouthernEnglish"]
        assert len(m.speakers) == 12
        rec = m.record("sc01-000")
        assert rec.speaker_id == "sc01"
        assert rec.utterance_index == 0
        assert m.utterance("sc01", 0) is rec

    def test_unknown_utt_id(self, corpus):
        with pytest.raises(DataError, match="unknown utt_id"):
            corpus.manifest.record("missing")

    def test_duplicate_utt_id(self):
        with pytest.raises(DataError, match="duplicate"):
            Manifest((_record(), _record()))

    def test_speaker_accent_conflict(self):
        with pytest.raises(DataError, match="accents"):
            Manifest((_record("u0"), _record("u1", accent="Irish", index=1)))

    def test_speaker_split_conflict(self):
        with pytest.raises(DataError, match="splits"):
            Manifest((_record("u0"), _record("u1", split="test", index=1)))

    def test_indices_must_be_dense_from_zero(self):
        with pytest.raises(DataError, match="dense"):
            Manifest((_record("u0"), _record("u1", index=2)))

    def test_unknown_split(self):
        with pytest.raises(DataError, match="split"):
            Manifest((_record(split="dev"),))

    def test_subset_filters(self, corpus):
        train = corpus.manifest.subset(split="train")
        assert {r.split for r in train} == {"train"}
        assert len(train.speakers) == 6
        one = corpus.manifest.subset(speakers=["sc01"])
        assert one.speakers == ["sc01"]
        with pytest.raises(DataError, match="no records"):
            corpus.manifest.subset(speakers=["nobody"])

    def test_records_for_speaker_sorted(self, corpus):
        recs = corpus.manifest.records_for_speaker("se02")
        assert [r.utterance_index for r in recs] == list(range(26))

    def test_resolve_path(self, tmp_path):
        m = Manifest((_record(),), base_dir=str(tmp_path))
        assert m.resolve_path("x.ftr") == tmp_path / "x.ftr"
        assert m.resolve_path("x.ftr", "/elsewhere") == corpus.Path("/elsewhere/x.ftr")
        assert m.resolve_path("/abs/x.ftr", "/elsewhere") == corpus.Path("/abs/x.ftr")

    def test_load_rejects_bad_records(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"utt_id": "u0"}\n')
        with pytest.raises(DataError, match="missing field"):
            load_manifest(path)
        path.write_text("not json\n")
        with pytest.raises(DataError, match="invalid JSON"):
            load_manifest(path)
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_manifest(path)

    def test_utterance_index_must_be_int(self, tmp_path):
        path = tmp_path / "m.jsonl"
        rec = {
            "utt_id": "u0", "speaker_id": "s", "accent_region": "a",
            "split": "train", "text": "x", "feature_path": "u0.ftr",
            "utterance_index": True,
        }
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(DataError, match="integer"):
            load_manifest(path)

    def test_write_then_load_round_trip(self, corpus, tmp_path):
        path = tmp_path / "copy.jsonl"
        write_manifest(corpus.manifest.records, path)
        again = load_manifest(path)
        assert again.records == corpus.manifest.records


class TestTranscripts:
    def test_tokenize_strips_edge_punctuation(self):
        assert tokenize_transcript("Mr. Smith's dog") == ["mr", "smith's", "dog"]

    def test_tokenize_folds_case_and_curly_quotes(self):
        assert tokenize_transcript("It’s “FINE”!") == ["it's", "fine"]

    def test_tokenize_drops_bare_punctuation(self):
        assert tokenize_transcript("well - yes") == ["well", "yes"]

    def test_tokenize_empty(self):
        assert tokenize_transcript("   ") == []


class TestAlignments:
    def test_word_tier_has_no_context(self, corpus):
        segs = corpus.word_segments["sc01-000"]
        assert [s.label for s in segs] == corpus.manifest.record("sc01-000").text.split()
        assert all(s.prev_label is None and s.next_label is None for s in segs)

    def test_phone_tier_context_labels(self, corpus):
        segs = corpus.phone_segments["sc01-000"]
        assert segs[0].prev_label == "#"
        assert segs[-1].next_label == "#"
        assert segs[1].prev_label == segs[0].label
        assert segs[1].next_label == segs[2].label

    def test_unsorted_rejected(self, tmp_path):
        path = tmp_path / "a.tsv"
        path.write_text("0.5\t0.7\tb\n0.1\t0.3\ta\n")
        with pytest.raises(DataError, match="sorted"):
            load_alignment_file(path, "u0")

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "a.tsv"
        path.write_text("0.1 0.3 a\n")
        with pytest.raises(DataError, match="TAB"):
            load_alignment_file(path, "u0")
        path.write_text("x\t0.3\ta\n")
        with pytest.raises(DataError, match="non-numeric"):
            load_alignment_file(path, "u0")

    def test_bad_span_rejected(self, tmp_path):
        path = tmp_path / "a.tsv"
        path.write_text("0.3\t0.3\ta\n")
        with pytest.raises(DataError, match="bad segment times"):
            load_alignment_file(path, "u0")

    def test_segment_index_skips_records_without_paths(self, corpus):
        index = load_segment_index(corpus.gen_manifest, tier="word")
        assert index == {}

    def test_slice_segment_exact_frames(self):
        frames = np.arange(40, dtype=np.float32).reshape(10, 4)
        seq = FeatureSequence(frames, 50.0)
        cut = slice_segment(seq, Segment("u0", "w", 0.04, 0.12))
        assert np.array_equal(cut.frames, frames[2:6])

    def test_slice_segment_keeps_final_frame_at_boundary(self):
        seq = FeatureSequence(np.arange(8, dtype=np.float32).reshape(4, 2), 50.0)
        cut = slice_segment(seq, Segment("u0", "w", 0.06, 0.08))
        assert np.array_equal(cut.frames, seq.frames[3:4])

    def test_slice_segment_outside_rejected(self):
        seq = FeatureSequence(np.ones((4, 2), dtype=np.float32), 50.0)
        with pytest.raises(DataError, match="outside"):
            slice_segment(seq, Segment("u0", "w", 0.2, 0.3))

    def test_slices_match_alignment_layout(self, corpus, provider):
        # Every word in the synthetic corpus is 3 phones of 4 frames each.
        for seg in corpus.word_segments["se03-001"]:
            assert provider(_ref(seg)).shape == (12, 8)


def _ref(seg):
    from accenteval.abx import SegmentRef

    return SegmentRef(seg.utt_id, seg.label, seg.start_s, seg.end_s)


class TestEmbeddings:
    def test_jsonl_sidecar(self, corpus):
        table = load_embeddings(corpus.accent_embeddings_path, kind="accent")
        assert len(table) == 312 + 78 + 130
        vec = table["sc01-000"]
        assert vec.shape == (8,) and vec.dtype == np.float32

    def test_directory_of_single_frame_files(self, tmp_path):
        for name, value in (("u0", 1.0), ("u1", 2.0)):
            write_feature_file(
                FeatureSequence(np.full((1, 3), value, dtype=np.float32), 1.0),
                tmp_path / f"{name}.ftr",
            )
        table = load_embeddings(tmp_path)
        assert sorted(table) == ["u0", "u1"]
        assert np.array_equal(table["u1"], np.full(3, 2.0, dtype=np.float32))

    def test_directory_multi_frame_rejected(self, tmp_path):
        write_feature_file(FeatureSequence(np.ones((2, 3), dtype=np.float32), 1.0), tmp_path / "u0.ftr")
        with pytest.raises(DataError, match="one frame"):
            load_embeddings(tmp_path)

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "e.jsonl"
        path.write_text(
            json.dumps({"utt_id": "a", "vector": [1.0, 2.0]}) + "\n"
            + json.dumps({"utt_id": "b", "vector": [1.0]}) + "\n"
        )
        with pytest.raises(DataError, match="dimension"):
            load_embeddings(path)

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "e.jsonl"
        line = json.dumps({"utt_id": "a", "vector": [1.0]}) + "\n"
        path.write_text(line + line)
        with pytest.raises(DataError, match="duplicate"):
            load_embeddings(path)


class TestPpg:
    def test_loads_synthetic_ppg(self, corpus):
        ppg = load_ppg_file(corpus.ppg_root / "sc01-000.ftr")
        assert ppg.num_classes == 12
        sums = ppg.frames.astype(np.float64).sum(axis=1)
        assert np.abs(sums - 1.0).max() <= ppg.SUM_TOLERANCE

    def test_rejects_bad_rows(self, tmp_path):
        path = tmp_path / "p.ftr"
        write_feature_file(FeatureSequence(np.array([[0.9, 0.2]], dtype=np.float32), 50.0), path)
        with pytest.raises(DataError, match="sums to"):
            load_ppg_file(path)
        write_feature_file(FeatureSequence(np.array([[1.5, -0.5]], dtype=np.float32), 50.0), path)
        with pytest.raises(DataError, match="non-negative"):
            load_ppg_file(path)


class TestValidateManifest:
    def test_clean_corpus_validates(self, corpus):
        report = validate_manifest(corpus.manifest_path)
        assert report.ok
        assert report.record_count == 312
        assert report.speaker_count == 12
        assert report.split_counts == {"train": 156, "test": 156}
        assert report.accent_counts == {"Scottish": 6, "SouthernEnglish": 6}
        assert report.frame_rate_hz == 50.0

    def test_unknown_fields_warn(self, corpus, tmp_path):
        rows = corpus.manifest_path.read_text().splitlines()
        raw = json.loads(rows[0])
        raw["surprise"] = 1
        raw["feature_path"] = str(corpus.root / "features" / (raw["utt_id"] + ".ftr"))
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps(raw) + "\n")
        report = validate_manifest(path)
        assert report.ok
        assert any("surprise" in w for w in report.warnings)

    def test_missing_feature_file_is_error(self, tmp_path):
        path = tmp_path / "m.jsonl"
        rec = {
            "utt_id": "u0", "speaker_id": "s", "accent_region": "Scottish",
            "split": "train", "text": "x", "feature_path": "gone.ftr",
            "utterance_index": 0,
        }
        path.write_text(json.dumps(rec) + "\n")
        report = validate_manifest(path)
        assert not report.ok
        assert any("not found" in e for e in report.errors)
        assert validate_manifest(path, check_files=False).ok

    def test_mixed_frame_rates_is_error(self, tmp_path):
        recs = []
        for i, rate in enumerate((50.0, 100.0)):
            write_feature_file(
                FeatureSequence(np.ones((2, 2), dtype=np.float32), rate), tmp_path / f"u{i}.ftr"
            )
            recs.append(
                {
                    "utt_id": f"u{i}", "speaker_id": "s", "accent_region": "Scottish",
                    "split": "train", "text": "x", "feature_path": f"u{i}.ftr",
                    "utterance_index": i,
                }
            )
        path = tmp_path / "m.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
        report = validate_manifest(path)
        assert any("mixed frame rates" in e for e in report.errors)


class TestPermutedAccents:
    def test_relabels_accents_only(self, corpus):
        flipped = {
            s: ("SouthernEnglish" if a == "Scottish" else "Scottish")
            for s, a in corpus.manifest.speaker_accent.items()
        }
        out = permuted_accents(corpus.manifest, flipped)
        assert out.speaker_accent["sc01"] == "SouthernEnglish"
        assert [r.utt_id for r in out] == [r.utt_id for r in corpus.manifest]
        assert [r.feature_path for r in out] == [r.feature_path for r in corpus.manifest]

    def test_missing_speaker_rejected(self, corpus):
        with pytest.raises(DataError, match="misses"):
            permuted_accents(corpus.manifest, {"sc01": "Irish"})
