"""Fixed-duration segment extraction and log-mel features.

Segments are cut with floor indexing at the requested timestamp and
zero-padded wherever the window overruns the recording, so candidate
offsets near the edges stay scoreable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .types import AudioBuffer


@dataclass(frozen=True)
class FeatureConfig:
    segment_s: float = 2.0
    n_fft: int = 400
    hop: int = 160
    n_mels: int = 40
    fmin: float = 0.0
    fmax: Optional[float] = None  # None -> sample_rate / 2
    log_floor: float = 1e-10

    def __post_init__(self):
        if not (self.n_fft >= self.hop > 0):
            raise ValueError("need n_fft >= hop > 0")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def pooled_dim(self) -> int:
        return 2 * self.n_mels


@dataclass(frozen=True)
class Segment:
    samples: np.ndarray
    origin_t: float
    channel: int
    sample_rate_hz: int


def segment_length(cfg: FeatureConfig, sample_rate_hz: int) -> int:
    return int(math.floor(cfg.segment_s * sample_rate_hz))


def extract_segment(buf: AudioBuffer, t: float, cfg: FeatureConfig,
                    channel: int = 0) -> Segment:
    """Cut the window [floor(t*fs), floor(t*fs) + floor(tau*fs)).

    Out-of-range regions are zero-filled rather than erroring, since
    candidate offsets can push windows slightly past the recording edge.
    """
    fs = buf.sample_rate_hz
    length = segment_length(cfg, fs)
    start = int(math.floor(t * fs))
    out = np.zeros(length)
    lo = max(start, 0)
    hi = min(start + length, len(buf))
    if hi > lo:
        out[lo - start:hi - start] = buf.samples[lo:hi]
    return Segment(out, float(t), channel, fs)


def hertz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hertz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(cfg: FeatureConfig, sample_rate_hz: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular mel band."""
    fmax = cfg.fmax if cfg.fmax is not None else sample_rate_hz / 2.0
    edges = np.linspace(hertz_to_mel(cfg.fmin), hertz_to_mel(fmax),
                        cfg.n_mels + 2)
    return mel_to_hertz(edges[1:-1])


@lru_cache(maxsize=32)
def _mel_filterbank_cached(cfg: FeatureConfig, sample_rate_hz: int) -> np.ndarray:
    fmax = cfg.fmax if cfg.fmax is not None else sample_rate_hz / 2.0
    if fmax > sample_rate_hz / 2.0:
        raise ValueError("fmax exceeds Nyquist")
    n_bins = cfg.n_fft // 2 + 1
    bin_mel = hertz_to_mel(np.linspace(0.0, sample_rate_hz / 2.0, n_bins))
    edges = np.linspace(hertz_to_mel(cfg.fmin), hertz_to_mel(fmax),
                        cfg.n_mels + 2)
    fb = np.zeros((n_bins, cfg.n_mels))
    for m in range(cfg.n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_mel - lo) / (center - lo)
        falling = (hi - bin_mel) / (hi - center)
        fb[:, m] = np.maximum(0.0, np.minimum(rising, falling))
    fb[0, :] = 0.0  # drop DC
    fb.flags.writeable = False
    return fb


def mel_filterbank(cfg: FeatureConfig, sample_rate_hz: int) -> np.ndarray:
    """Triangular mel filters, shape (n_fft // 2 + 1, n_mels)."""
    return _mel_filterbank_cached(cfg, sample_rate_hz)


@lru_cache(maxsize=32)
def _periodic_hann(n: int) -> np.ndarray:
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.flags.writeable = False
    return w


class PooledExtractor:
    """Repeated pooled-feature queries against one buffer.

    Pads the waveform once and gathers all window frames in a single
    indexing pass per query, which keeps scoring thousands of candidate
    windows tractable. Numerically equivalent to the one-segment path.

    ``densify`` additionally precomputes the log-mel frame at every sample
    position in a time range, after which each query reduces to a table
    gather; candidate searches call it once and then score thousands of
    windows for the cost of indexing.
    """

    def __init__(self, buf: AudioBuffer, cfg: FeatureConfig):
        self.cfg = cfg
        self.fs = buf.sample_rate_hz
        self.length = segment_length(cfg, self.fs)
        if self.length < cfg.n_fft:
            raise ValueError("segment shorter than n_fft")
        self.n_frames = 1 + (self.length - cfg.n_fft) // cfg.hop
        self._samples = buf.samples
        self._padded: Optional[np.ndarray] = None
        self._pad_lo = 0
        self._frame_offsets = (cfg.hop * np.arange(self.n_frames))[None, :]
        self._taps = np.arange(cfg.n_fft)[None, :]
        self._window = _periodic_hann(cfg.n_fft)
        self._fb = mel_filterbank(cfg, self.fs)
        self._table: Optional[np.ndarray] = None
        self._table_start = 0

    def _ensure_padding(self, starts: np.ndarray) -> None:
        lo = max(0, -int(starts.min()))
        hi = max(0, int(starts.max()) + self.length - len(self._samples))
        if self._padded is None or lo > self._pad_lo or \
                hi > len(self._padded) - self._pad_lo - len(self._samples):
            lo = max(lo, self._pad_lo)
            hi = max(hi, 0 if self._padded is None
                     else len(self._padded) - self._pad_lo - len(self._samples))
            self._padded = np.pad(self._samples, (lo, hi))
            self._pad_lo = lo

    def _logmel_frames(self, frame_starts: np.ndarray) -> np.ndarray:
        """Log-mel rows for frames at absolute padded positions."""
        from scipy.fft import rfft

        frames = self._padded[frame_starts[:, None] + self._taps]
        spec = np.abs(rfft(frames * self._window, self.cfg.n_fft)) ** 2
        mel = spec @ self._fb
        return np.log(np.maximum(mel, self.cfg.log_floor))

    def densify(self, t_min: float, t_max: float,
                chunk_frames: int = 32768) -> None:
        """Precompute frame features for window starts in [t_min, t_max]."""
        lo = int(math.floor(t_min * self.fs))
        hi = int(math.floor(t_max * self.fs))
        self._ensure_padding(np.array([lo, hi]))
        # table row r holds the frame at unpadded sample position lo + r
        count = hi - lo + self.length - self.cfg.n_fft + 1
        table = np.empty((count, self.cfg.n_mels))
        for start in range(0, count, chunk_frames):
            stop = min(start + chunk_frames, count)
            table[start:stop] = self._logmel_frames(
                np.arange(start, stop) + lo + self._pad_lo)
        self._table = table
        self._table_start = lo

    def __call__(self, times) -> np.ndarray:
        cfg = self.cfg
        times = np.asarray(times, dtype=np.float64)
        starts = np.floor(times * self.fs).astype(np.int64)
        if self._table is not None:
            first = int(starts.min()) - self._table_start
            last = int(starts.max()) - self._table_start + self.length - cfg.n_fft
            if first >= 0 and last < len(self._table):
                rows = (starts - self._table_start)[:, None] + self._frame_offsets
                lm = self._table[rows]
                return np.concatenate([lm.mean(axis=1), lm.std(axis=1)], axis=1)
        self._ensure_padding(starts)
        frame_starts = ((starts + self._pad_lo)[:, None]
                        + self._frame_offsets).reshape(-1)
        lm = self._logmel_frames(frame_starts)
        lm = lm.reshape(len(times), self.n_frames, cfg.n_mels)
        return np.concatenate([lm.mean(axis=1), lm.std(axis=1)], axis=1)


def log_mel(seg: Segment, cfg: FeatureConfig) -> np.ndarray:
    """Log mel energies, shape (1 + (len - n_fft) // hop, n_mels)."""
    expected = segment_length(cfg, seg.sample_rate_hz)
    if len(seg.samples) != expected:
        raise ValueError(
            f"segment length {len(seg.samples)} does not match config "
            f"({expected} samples)"
        )
    if expected < cfg.n_fft:
        raise ValueError("segment shorter than n_fft")
    return _log_mel_batch(seg.samples[None, :], cfg, seg.sample_rate_hz)[0]


def _log_mel_batch(samples: np.ndarray, cfg: FeatureConfig,
                   sample_rate_hz: int) -> np.ndarray:
    """log_mel over a (batch, samples) array -> (batch, frames, n_mels)."""
    from scipy.fft import rfft

    b, n = samples.shape
    n_frames = 1 + (n - cfg.n_fft) // cfg.hop
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = samples[:, idx].reshape(-1, cfg.n_fft)
    spec = np.abs(rfft(frames * _periodic_hann(cfg.n_fft), cfg.n_fft)) ** 2
    mel = spec @ mel_filterbank(cfg, sample_rate_hz)
    out = np.log(np.maximum(mel, cfg.log_floor))
    return out.reshape(b, n_frames, cfg.n_mels)


def pool_features(fm: np.ndarray) -> np.ndarray:
    """Per-mel mean and population std, concatenated (length 2 * n_mels)."""
    fm = np.asarray(fm, dtype=np.float64)
    if fm.ndim != 2 or fm.shape[0] < 1:
        raise ValueError("feature matrix must have at least one frame")
    return np.concatenate([fm.mean(axis=0), fm.std(axis=0)])


def pooled_features_at(buf: AudioBuffer, times, cfg: FeatureConfig,
                       channel: int = 0) -> np.ndarray:
    """Pooled log-mel features for windows at many timestamps at once.

    Equivalent to extract_segment + log_mel + pool_features per timestamp,
    batched so candidate scoring stays cheap.
    """
    return PooledExtractor(buf, cfg)(times)
