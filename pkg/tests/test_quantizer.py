import struct

import numpy as np
import pytest

from accenteval.corpus import FeatureSequence
from accenteval.errors import ConfigError, DataError
from accenteval.quantizer import (
    Codebook,
    TokenSequence,
    TrainConfig,
    load_codebook,
    quantize,
    save_codebook,
    tokens_to_onehot,
    tokens_to_vectors,
    train_codebook,
)

from oracles import nearest_code_scan


def _blobs(seed, n=400, dim=6, clusters=5, spread=0.3):
    """Clustered gaussian frames split over a few sequences."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=4.0, size=(clusters, dim))
    frames = centers[rng.integers(clusters, size=n)] + rng.normal(scale=spread, size=(n, dim))
    frames = frames.astype(np.float32)
    third = n // 3
    return [
        FeatureSequence(frames[:third], 50.0),
        FeatureSequence(frames[third : 2 * third], 50.0),
        FeatureSequence(frames[2 * third :], 50.0),
    ]


class TestTraining:
    def test_epoch_errors_never_increase(self):
        for seed in range(4):
            errors = []
            train_codebook(
                _blobs(seed),
                8,
                TrainConfig(seed=seed, epochs=30, min_improvement=None),
                on_epoch=lambda _, err: errors.append(err),
            )
            assert len(errors) == 30
            for before, after in zip(errors, errors[1:]):
                assert after <= before + 1e-9

    def test_training_is_deterministic(self, tmp_path):
        config = TrainConfig(seed=3, epochs=12)
        first = train_codebook(_blobs(1), 8, config)
        second = train_codebook(_blobs(1), 8, config)
        assert first.centroids.tobytes() == second.centroids.tobytes()
        assert first.ema_counts.tobytes() == second.ema_counts.tobytes()
        assert first.ema_sums.tobytes() == second.ema_sums.tobytes()

    def test_different_seed_changes_codebook(self):
        a = train_codebook(_blobs(1), 8, TrainConfig(seed=0, epochs=5))
        b = train_codebook(_blobs(1), 8, TrainConfig(seed=1, epochs=5))
        assert a.centroids.tobytes() != b.centroids.tobytes()

    def test_single_code_single_epoch_is_exact_mean(self):
        # With one code every frame lands on it: the EMA count is
        # (1 - decay) * n and the centroid is the plain frame mean.
        frames = np.random.default_rng(2).normal(size=(100, 4)).astype(np.float32)
        book = train_codebook(
            [FeatureSequence(frames, 50.0)], 1, TrainConfig(seed=0, epochs=1)
        )
        assert book.ema_counts[0] == np.float32(0.01 * 100)
        np.testing.assert_allclose(
            book.centroids[0], frames.astype(np.float64).mean(axis=0), rtol=1e-6
        )

    def test_ema_state_folds_across_epochs(self):
        frames = np.random.default_rng(2).normal(size=(50, 4)).astype(np.float32)
        book = train_codebook(
            [FeatureSequence(frames, 50.0)],
            1,
            TrainConfig(seed=0, epochs=2, min_improvement=None),
        )
        # counts: 0 -> 0.01 n -> 0.99 * 0.01 n + 0.01 n
        assert book.ema_counts[0] == np.float32((0.99 * 0.01 + 0.01) * 50)

    def test_early_stop_runs_fewer_epochs(self):
        epochs_seen = []
        train_codebook(
            _blobs(0),
            4,
            TrainConfig(seed=0, epochs=200, min_improvement=1e-6),
            on_epoch=lambda e, _: epochs_seen.append(e),
        )
        assert len(epochs_seen) < 200

    def test_subsampling_caps_training_frames(self):
        # Cannot observe the subsample directly; equal results with and
        # without a cap above n, and valid results with a cap below n.
        full = train_codebook(_blobs(5), 4, TrainConfig(seed=0, epochs=5, max_frames=10_000))
        capped = train_codebook(_blobs(5), 4, TrainConfig(seed=0, epochs=5, max_frames=120))
        assert np.isfinite(capped.centroids).all()
        assert full.centroids.shape == capped.centroids.shape == (4, 6)

    def test_degenerate_data_reseeds_dead_codes(self):
        frames = np.zeros((16, 3), dtype=np.float32)
        book = train_codebook(
            [FeatureSequence(frames, 50.0)], 4, TrainConfig(seed=0, epochs=3, min_improvement=None)
        )
        assert np.isfinite(book.centroids).all()
        tokens = quantize(FeatureSequence(frames, 50.0), book)
        assert tokens.tokens.min() >= 0

    def test_k_larger_than_frames_rejected(self):
        with pytest.raises(DataError, match="training frames"):
            train_codebook([FeatureSequence(np.ones((3, 2), dtype=np.float32), 50.0)], 4)

    def test_bad_k_rejected(self):
        with pytest.raises(ConfigError):
            train_codebook(_blobs(0), 0)

    def test_mixed_dimensions_rejected(self):
        seqs = [
            FeatureSequence(np.ones((4, 2), dtype=np.float32), 50.0),
            FeatureSequence(np.ones((4, 3), dtype=np.float32), 50.0),
        ]
        with pytest.raises(DataError, match="dimension"):
            train_codebook(seqs, 2)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(decay=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(epsilon=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(max_frames=0)


class TestQuantize:
    def test_matches_exhaustive_nearest_scan(self):
        rng = np.random.default_rng(11)
        book = train_codebook(_blobs(11), 16, TrainConfig(seed=0, epochs=8))
        frames = rng.normal(scale=4.0, size=(500, 6)).astype(np.float32)
        tokens = quantize(FeatureSequence(frames, 50.0), book)
        expected, _ = nearest_code_scan(frames, book.centroids)
        assert np.array_equal(tokens.tokens, expected.astype(np.int32))

    def test_ties_take_lowest_index(self):
        cents = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]], dtype=np.float32)
        book = Codebook(cents, np.ones(3), np.zeros((3, 2)))
        tokens = quantize(FeatureSequence(np.zeros((2, 2), dtype=np.float32), 50.0), book)
        assert tokens.tokens.tolist() == [0, 0]

    def test_dimension_mismatch_rejected(self):
        book = Codebook(np.ones((2, 3), dtype=np.float32), np.ones(2), np.ones((2, 3)))
        with pytest.raises(DataError, match="dimension"):
            quantize(FeatureSequence(np.ones((2, 2), dtype=np.float32), 50.0), book)

    def test_token_round_trips(self):
        book = train_codebook(_blobs(3), 8, TrainConfig(seed=0, epochs=5))
        seq = _blobs(3)[0]
        tokens = quantize(seq, book)
        assert tokens.frame_rate_hz == seq.frame_rate_hz

        vecs = tokens_to_vectors(tokens, book)
        assert np.array_equal(vecs.frames, book.centroids[tokens.tokens])

        onehot = tokens_to_onehot(tokens)
        assert onehot.dim == book.size
        assert np.array_equal(onehot.frames.argmax(axis=1), tokens.tokens)
        assert np.array_equal(onehot.frames.sum(axis=1), np.ones(tokens.num_frames))

    def test_token_sequence_validation(self):
        with pytest.raises(DataError, match="out of range"):
            TokenSequence(np.array([0, 5]), 4, 50.0)
        with pytest.raises(DataError):
            TokenSequence(np.array([], dtype=np.int32), 4, 50.0)


class TestCodebookFiles:
    def test_round_trip_is_bitwise(self, tmp_path):
        book = train_codebook(_blobs(9), 8, TrainConfig(seed=4, epochs=6))
        path = tmp_path / "book.vqcb"
        save_codebook(book, path)
        again = load_codebook(path)
        assert again.centroids.tobytes() == book.centroids.tobytes()
        assert again.ema_counts.tobytes() == book.ema_counts.tobytes()
        assert again.ema_sums.tobytes() == book.ema_sums.tobytes()

        save_codebook(again, tmp_path / "book2.vqcb")
        assert (tmp_path / "book2.vqcb").read_bytes() == path.read_bytes()

    def test_layout_matches_documented_format(self, tmp_path):
        cents = np.arange(6, dtype=np.float32).reshape(2, 3)
        book = Codebook(cents, np.array([1.0, 2.0]), np.arange(6).reshape(2, 3) * 0.5)
        path = tmp_path / "book.vqcb"
        save_codebook(book, path)
        blob = path.read_bytes()
        magic, k, d = struct.unpack("<4sII", blob[:12])
        assert (magic, k, d) == (b"VQCB", 2, 3)
        assert len(blob) == 12 + 4 * (6 + 2 + 6)
        assert blob[12 : 12 + 24] == cents.tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "book.vqcb"
        path.write_bytes(b"XXXX" + b"\x00" * 8)
        with pytest.raises(DataError, match="magic"):
            load_codebook(path)

    def test_truncated_and_trailing_rejected(self, tmp_path):
        book = Codebook(np.ones((2, 2), dtype=np.float32), np.ones(2), np.ones((2, 2)))
        path = tmp_path / "book.vqcb"
        save_codebook(book, path)
        good = path.read_bytes()
        path.write_bytes(good[:-1])
        with pytest.raises(DataError, match="truncated"):
            load_codebook(path)
        path.write_bytes(good + b"\x00")
        with pytest.raises(DataError, match="trailing"):
            load_codebook(path)

    def test_state_shape_mismatch_rejected(self):
        with pytest.raises(DataError, match="shapes"):
            Codebook(np.ones((2, 2), dtype=np.float32), np.ones(3), np.ones((2, 2)))
