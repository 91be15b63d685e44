"""BPSK over AWGN and Monte Carlo BER estimation.

Noise is drawn from counter-based Philox streams keyed by
``(seed, stream, chunk index)``. Frames are simulated in fixed-size chunks,
so results do not depend on how chunks are distributed over workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError
from .gf2codes import Code, encode
from .wbp import channel_llr, db_to_linear

log = logging.getLogger(__name__)

NOISE_STREAM = 0
DECODER_STREAM = 1
MESSAGE_STREAM = 2
CHUNK_FRAMES = 200

DecoderFn = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def stream_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Independent Philox generator for (seed, stream, index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(index)])))


@dataclass(frozen=True)
class ChannelConfig:
    rate: float
    snr_db: float

    def __post_init__(self):
        if not 0 < self.rate <= 1:
            raise ParameterError(f"rate {self.rate} outside (0, 1]")

    @property
    def snr(self) -> float:
        return float(db_to_linear(self.snr_db))

    @property
    def variance(self) -> float:
        return 1.0 / (2.0 * self.rate * self.snr)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


def transmit(x, cfg: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """y = (-1)^x + z with z ~ N(0, (2 R rho)^-1)."""
    x = np.asarray(x)
    sym = 1.0 - 2.0 * x.astype(float)
    return sym + cfg.sigma * rng.standard_normal(x.shape)


@dataclass
class BerEstimate:
    bit_errors: int = 0
    bits: int = 0
    frames: int = 0
    frame_errors: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else float("nan")

    @property
    def interval(self) -> tuple[float, float]:
        """95% normal-approximation interval, clipped to [0, 1]."""
        if not self.bits:
            return (float("nan"), float("nan"))
        p = self.ber
        half = 1.96 * math.sqrt(p * (1 - p) / self.bits)
        return (max(0.0, p - half), min(1.0, p + half))

    def merge(self, other: "BerEstimate") -> None:
        self.bit_errors += other.bit_errors
        self.bits += other.bits
        self.frames += other.frames
        self.frame_errors += other.frame_errors


@dataclass(frozen=True)
class StopRule:
    min_errors: int = 100
    max_frames: int = 10**7


def _simulate_chunk(decoder: DecoderFn, cfg: ChannelConfig, n: int, seed: int, chunk: int,
                    frames: int, code: Code | None) -> BerEstimate:
    if code is None:
        x = np.zeros((frames, n), dtype=np.uint8)
    else:
        msg_rng = stream_rng(seed, MESSAGE_STREAM, chunk)
        x = encode(code, msg_rng.integers(0, 2, size=(frames, code.k), dtype=np.uint8))
    y = transmit(x, cfg, stream_rng(seed, NOISE_STREAM, chunk))
    llr = channel_llr(y, cfg.rate, cfg.snr)
    try:
        xhat = np.asarray(decoder(llr, stream_rng(seed, DECODER_STREAM, chunk)))
    except Exception as exc:  # noqa: BLE001 - any decoder failure is a frame error
        log.warning("decoder failed on chunk %d (%s); counting %d frames as erroneous", chunk, exc, frames)
        return BerEstimate(frames * n, frames * n, frames, frames)
    errs = (xhat != x).sum(axis=1)
    return BerEstimate(int(errs.sum()), frames * n, frames, int((errs > 0).sum()))


def estimate_ber(decoder: DecoderFn, cfg: ChannelConfig, n: int, stop: StopRule = StopRule(),
                 seed: int = 0, workers: int = 1, code: Code | None = None,
                 chunk_frames: int = CHUNK_FRAMES) -> BerEstimate:
    """Simulate frames until ``stop.min_errors`` bit errors or ``stop.max_frames`` frames.

    All-zero codewords are sent unless ``code`` is given, in which case
    uniformly random codewords are used. The decoder maps an LLR batch and
    a generator to hard decisions; it must be safe to call from threads.
    Counts stop at the first chunk boundary where the error target is met.
    """
    total = BerEstimate()
    if stop.max_frames <= 0:
        return total
    n_chunks = -(-stop.max_frames // chunk_frames)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        c = 0
        while c < n_chunks:
            wave = range(c, min(n_chunks, c + max(1, workers)))
            sizes = [min(chunk_frames, stop.max_frames - i * chunk_frames) for i in wave]
            args = [(decoder, cfg, n, seed, i, sz, code) for i, sz in zip(wave, sizes)]
            if pool:
                results = list(pool.map(lambda a: _simulate_chunk(*a), args))
            else:
                results = [_simulate_chunk(*a) for a in args]
            for res in results:
                total.merge(res)
                if total.bit_errors >= stop.min_errors:
                    return total
            c = wave.stop
    finally:
        if pool:
            pool.shutdown()
    return total


@dataclass
class TrainingBatch:
    x: np.ndarray        # (B, N) codewords
    y: np.ndarray        # (B, N) channel outputs
    snr_db: np.ndarray   # (B,)

    def llr(self, rate: float) -> np.ndarray:
        return channel_llr(self.y, rate, db_to_linear(self.snr_db))

    def __len__(self) -> int:
        return self.x.shape[0]


def default_snr_grid(lo: float = 1.0, hi: float = 8.0, points: int = 10) -> np.ndarray:
    return np.linspace(lo, hi, points)


def training_batch(grid_db, per_point: int, n: int, rate: float, rng: np.random.Generator,
                   code: Code | None = None) -> TrainingBatch:
    """Exactly ``per_point`` samples at each grid SNR, grouped by grid point."""
    grid = np.atleast_1d(np.asarray(grid_db, dtype=float))
    if grid.size == 0:
        raise ParameterError("SNR grid is empty")
    snr_db = np.repeat(grid, per_point)
    b = snr_db.size
    if code is None:
        x = np.zeros((b, n), dtype=np.uint8)
    else:
        x = encode(code, rng.integers(0, 2, size=(b, code.k), dtype=np.uint8))
    sigma = np.sqrt(1.0 / (2.0 * rate * db_to_linear(snr_db)))[:, None]
    y = (1.0 - 2.0 * x) + sigma * rng.standard_normal((b, n))
    return TrainingBatch(x, y, snr_db)


BER_COLUMNS = ("code", "matrix", "decoder", "snr_db", "frames", "bit_errors", "ber", "ci_low", "ci_high", "seed")


def ber_row(code: str, matrix: str, decoder: str, snr_db: float, est: BerEstimate, seed: int) -> list[str]:
    lo, hi = est.interval
    return [code, matrix, decoder, repr(float(snr_db)), str(est.frames), str(est.bit_errors),
            repr(est.ber), repr(lo), repr(hi), str(seed)]
