"""Frame quantization: EMA k-means codebook training and token conversion.

Training runs k-means++ seeding followed by full-batch epochs in which the
per-code frame counts and frame sums are tracked as exponential moving
averages. Centroids are the smoothed ratio of these accumulators, which
keeps rarely used codes from collapsing to zero, and codes that stop
receiving frames are re-seeded from the data.

Codebook file (``.vqcb``)
    Binary, little-endian: magic ``VQCB``, u32 K, u32 D, then K*D f32
    centroids, K f32 usage counts, K*D f32 running sums. No trailing bytes.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import atomic_write_bytes
from .corpus import FeatureSequence
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

VQCB_MAGIC = b"VQCB"
_VQCB_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class TrainConfig:
    """Codebook training knobs.

    min_improvement stops training early once the epoch-over-epoch drop in
    quantization error falls below it; None runs every epoch.
    """

    seed: int = 0
    epochs: int = 50
    decay: float = 0.99
    epsilon: float = 1e-5
    max_frames: int = 2_000_000
    min_improvement: float | None = 1e-6
    dead_code_fraction: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (0.0 < self.decay < 1.0):
            raise ConfigError(f"decay must be in (0, 1), got {self.decay}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_frames < 1:
            raise ConfigError(f"max_frames must be >= 1, got {self.max_frames}")
        if not (0.0 <= self.dead_code_fraction < 1.0):
            raise ConfigError(f"dead_code_fraction must be in [0, 1), got {self.dead_code_fraction}")


@dataclass
class Codebook:
    """Trained codebook: centroids plus the EMA state that produced them.

    All arrays are float32, matching the on-disk layout, so a save/load
    round trip reproduces them bit for bit.
    """

    centroids: np.ndarray
    ema_counts: np.ndarray
    ema_sums: np.ndarray
    decay: float = 0.99
    epsilon: float = 1e-5

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        self.ema_counts = np.ascontiguousarray(self.ema_counts, dtype=np.float32)
        self.ema_sums = np.ascontiguousarray(self.ema_sums, dtype=np.float32)
        if self.centroids.ndim != 2:
            raise DataError("centroids must be a (K, D) matrix")
        k, d = self.centroids.shape
        if k < 1 or d < 1:
            raise DataError(f"empty codebook ({k}x{d})")
        if self.ema_counts.shape != (k,) or self.ema_sums.shape != (k, d):
            raise DataError("EMA state shapes do not match the centroid matrix")
        for arr, name in ((self.centroids, "centroids"), (self.ema_counts, "counts"),
                          (self.ema_sums, "sums")):
            if not np.isfinite(arr).all():
                raise DataError(f"non-finite values in codebook {name}")

    @property
    def size(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class TokenSequence:
    """Code indices for one utterance at the feature frame rate."""

    tokens: np.ndarray
    codebook_size: int
    frame_rate_hz: float

    def __post_init__(self):
        tokens = np.ascontiguousarray(self.tokens, dtype=np.int32)
        if tokens.ndim != 1 or tokens.size < 1:
            raise DataError("token sequence must be 1-D and non-empty")
        if tokens.min() < 0 or tokens.max() >= self.codebook_size:
            raise DataError(
                f"token out of range [0, {self.codebook_size}): "
                f"min={tokens.min()}, max={tokens.max()}"
            )
        object.__setattr__(self, "tokens", tokens)

    @property
    def num_frames(self) -> int:
        return self.tokens.size


def _stack_frames(sequences) -> np.ndarray:
    mats = []
    dim = None
    for seq in sequences:
        if dim is None:
            dim = seq.dim
        elif seq.dim != dim:
            raise DataError(f"mixed feature dimensions: {seq.dim} != {dim}")
        mats.append(seq.frames)
    if not mats:
        raise DataError("no training sequences given")
    return np.concatenate(mats, axis=0)


def _assign(frames: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per frame under squared euclidean distance.

    Math runs in float64, ties go to the lowest code index. Returns the
    assignment vector and the summed squared distance of chosen codes.
    """
    n = frames.shape[0]
    k, d = centroids.shape
    cents = centroids.astype(np.float64)
    out = np.empty(n, dtype=np.int64)
    total_err = 0.0
    # Bound the (chunk, K, D) workspace to roughly 32 MB of float64.
    chunk = max(1, int(4_000_000 // max(1, k * d)))
    for lo in range(0, n, chunk):
        block = frames[lo : lo + chunk].astype(np.float64)
        diff = block[:, None, :] - cents[None, :, :]
        dist = (diff * diff).sum(axis=-1)
        idx = dist.argmin(axis=1)
        out[lo : lo + block.shape[0]] = idx
        total_err += float(dist[np.arange(block.shape[0]), idx].sum())
    return out, total_err


def _kmeans_pp(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over the (possibly subsampled) training frames."""
    n = frames.shape[0]
    data = frames.astype(np.float64)
    chosen = [int(rng.integers(n))]
    d2 = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            # Fewer distinct points than codes; fall back to uniform picks.
            remaining = np.setdiff1d(np.arange(n), np.asarray(chosen))
            pool = remaining if remaining.size else np.arange(n)
            pick = int(pool[rng.integers(pool.size)])
        chosen.append(pick)
        d2 = np.minimum(d2, ((data - data[pick]) ** 2).sum(axis=1))
    return frames[np.asarray(chosen)].astype(np.float32).copy()


def _reinit_dead_codes(centroids, counts, sums, dead, frames, rng):
    """Reseed dead codes from training frames, avoiding duplicate centroids."""
    k = centroids.shape[0]
    share = counts.sum() / k
    for code in np.flatnonzero(dead):
        pick = frames[int(rng.integers(frames.shape[0]))].astype(np.float64)
        for _ in range(32):
            clash = np.abs(centroids - pick).max(axis=1).min() == 0.0
            if not clash:
                break
            pick = frames[int(rng.integers(frames.shape[0]))].astype(np.float64)
        centroids[code] = pick
        counts[code] = share
        sums[code] = pick * share


def train_codebook(sequences, k: int, config: TrainConfig = TrainConfig(), *, on_epoch=None) -> Codebook:
    """Train a K-code codebook on the frames of the given sequences.

    Per epoch: assign every frame to its nearest centroid, record the mean
    squared quantization error of that assignment, then fold the epoch's
    counts and sums into the EMA state and recompute centroids from the
    smoothed ratio. Codes whose EMA count drops below
    ``dead_code_fraction`` of the uniform share and that attracted no
    frames this epoch are reseeded from the data.

    Everything downstream of ``config.seed`` is deterministic, so the same
    data and config reproduce the codebook bit for bit.

    Args:
        sequences: iterable of FeatureSequence with a common dimension.
        k: codebook size; must not exceed the training frame count.
        config: training knobs; see TrainConfig.
        on_epoch: optional callback ``(epoch_index, mean_squared_error)``.

    Raises:
        ConfigError: k < 1.
        DataError: fewer frames than codes, or dimension mismatches.
    """
    if k < 1:
        raise ConfigError(f"codebook size must be >= 1, got {k}")
    frames = _stack_frames(sequences)
    rng = np.random.default_rng(config.seed)
    if frames.shape[0] > config.max_frames:
        keep = rng.choice(frames.shape[0], size=config.max_frames, replace=False)
        keep.sort()
        frames = frames[keep]
    n, dim = frames.shape
    if n < k:
        raise DataError(f"need at least {k} training frames for {k} codes, got {n}")

    centroids = _kmeans_pp(frames, k, rng).astype(np.float64)
    counts = np.zeros(k, dtype=np.float64)
    sums = np.zeros((k, dim), dtype=np.float64)
    decay = float(config.decay)
    eps = float(config.epsilon)

    prev_err = None
    for epoch in range(config.epochs):
        assign, err_total = _assign(frames, centroids.astype(np.float32))
        err = err_total / n
        if on_epoch is not None:
            on_epoch(epoch, err)
        if (
            prev_err is not None
            and config.min_improvement is not None
            and prev_err - err < config.min_improvement
        ):
            break
        prev_err = err

        batch_counts = np.bincount(assign, minlength=k).astype(np.float64)
        batch_sums = np.empty((k, dim), dtype=np.float64)
        frames64 = frames.astype(np.float64)
        for d in range(dim):
            batch_sums[:, d] = np.bincount(assign, weights=frames64[:, d], minlength=k)

        counts = decay * counts + (1.0 - decay) * batch_counts
        sums = decay * sums + (1.0 - decay) * batch_sums
        total = counts.sum()
        smoothed = (counts + eps) / (total + k * eps) * total
        centroids = sums / smoothed[:, None]

        dead = (counts < config.dead_code_fraction * total / k) & (batch_counts == 0)
        if dead.any():
            logger.debug("epoch %d: reseeding %d dead codes", epoch, int(dead.sum()))
            _reinit_dead_codes(centroids, counts, sums, dead, frames, rng)

    return Codebook(
        centroids=centroids.astype(np.float32),
        ema_counts=counts.astype(np.float32),
        ema_sums=sums.astype(np.float32),
        decay=decay,
        epsilon=eps,
    )


def quantize(seq: FeatureSequence, codebook: Codebook) -> TokenSequence:
    """Map every frame to its nearest code. Ties take the lowest index."""
    if seq.dim != codebook.dim:
        raise DataError(
            f"feature dimension {seq.dim} does not match codebook dimension {codebook.dim}"
        )
    assign, _ = _assign(seq.frames, codebook.centroids)
    return TokenSequence(assign.astype(np.int32), codebook.size, seq.frame_rate_hz)


def tokens_to_vectors(tokens: TokenSequence, codebook: Codebook) -> FeatureSequence:
    """Embed tokens as their centroid rows."""
    if tokens.codebook_size != codebook.size:
        raise DataError(
            f"token codebook size {tokens.codebook_size} does not match codebook {codebook.size}"
        )
    return FeatureSequence(codebook.centroids[tokens.tokens], tokens.frame_rate_hz)


def tokens_to_onehot(tokens: TokenSequence) -> FeatureSequence:
    """Embed tokens as one-hot rows over the code inventory."""
    frames = np.zeros((tokens.num_frames, tokens.codebook_size), dtype=np.float32)
    frames[np.arange(tokens.num_frames), tokens.tokens] = 1.0
    return FeatureSequence(frames, tokens.frame_rate_hz)


def save_codebook(codebook: Codebook, path: str | Path) -> None:
    """Write the codebook; load_codebook restores it bit for bit."""
    header = _VQCB_HEADER.pack(VQCB_MAGIC, codebook.size, codebook.dim)
    payload = (
        np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes()
        + np.ascontiguousarray(codebook.ema_counts, dtype="<f4").tobytes()
        + np.ascontiguousarray(codebook.ema_sums, dtype="<f4").tobytes()
    )
    atomic_write_bytes(header + payload, path)


def load_codebook(path: str | Path) -> Codebook:
    """Read a codebook file.

    Raises:
        DataError: bad magic, truncated or oversized payload, bad values.
    """
    path = Path(path)
    with open(path, "rb") as handle:
        header = handle.read(_VQCB_HEADER.size)
        if len(header) < _VQCB_HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, k, dim = _VQCB_HEADER.unpack(header)
        if magic != VQCB_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if k < 1 or dim < 1:
            raise DataError(f"{path}: empty codebook ({k}x{dim})")
        expected = 4 * (k * dim + k + k * dim)
        payload = handle.read(expected)
        if len(payload) != expected:
            raise DataError(f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}")
        if handle.read(1):
            raise DataError(f"{path}: trailing data after codebook payload")
    flat = np.frombuffer(payload, dtype="<f4")
    centroids = flat[: k * dim].reshape(k, dim).copy()
    counts = flat[k * dim : k * dim + k].copy()
    sums = flat[k * dim + k :].reshape(k, dim).copy()
    try:
        return Codebook(centroids=centroids, ema_counts=counts, ema_sums=sums)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
