"""Prosodic descriptor extraction from raw PCM audio.

Each analysis frame yields three values: fundamental frequency from
subharmonic summation on a log-frequency grid, voicing probability from the
peak normalized autocorrelation in the pitch lag range, and a compressed-RMS
loudness proxy. Frames whose voicing falls below the decision threshold are
marked unvoiced (F0 = 0).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PCM_MAGIC = b"PCM1"
_PCM_HEADER = struct.Struct("<4sIQ")
_INT16_SCALE = 32767.0


@dataclass(frozen=True)
class ProsodyConfig:
    """Analysis settings; defaults are conventional speech-analysis values."""

    window: float = 0.05
    hop: float = 0.01
    f0_min: float = 55.0
    f0_max: float = 400.0
    n_harmonics: int = 5
    compression: float = 0.85
    voicing_threshold: float = 0.45
    bins_per_octave: int = 48


@dataclass(frozen=True, eq=False)
class PcmSignal:
    """Single-channel audio: float samples in [-1, 1] at a fixed rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ProsodyFrame:
    f0: float
    voicing: float
    loudness: float


@dataclass(frozen=True)
class ProsodyTrack:
    """Per-frame prosody values for one segment, spaced ``frame_period`` seconds apart."""

    frames: tuple[ProsodyFrame, ...]
    frame_period: float

    def __len__(self) -> int:
        return len(self.frames)


def frame_signal(signal: PcmSignal, window: float, hop: float) -> np.ndarray:
    """Slice a signal into Hann-weighted analysis blocks.

    Returns an (n_blocks, block_len) array with block_len = round(window * rate)
    and block spacing round(hop * rate). Raises if the signal is shorter than
    one window.
    """
    if not (window >= hop > 0):
        raise ValueError("require window >= hop > 0")
    rate = signal.sample_rate
    block_len = int(round(window * rate))
    hop_len = int(round(hop * rate))
    x = np.asarray(signal.samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    if x.size < block_len:
        raise ValueError(
            f"signal of {x.size} samples is shorter than one {block_len}-sample window"
        )
    n_blocks = (x.size - block_len) // hop_len + 1
    idx = hop_len * np.arange(n_blocks)[:, None] + np.arange(block_len)[None, :]
    return x[idx] * np.hanning(block_len)


def _log_frequency_grid(f0_min: float, f0_max: float, bins_per_octave: int) -> np.ndarray:
    n_bins = int(np.floor(np.log2(f0_max / f0_min) * bins_per_octave))
    grid = f0_min * 2.0 ** (np.arange(n_bins + 1) / bins_per_octave)
    if grid[-1] < f0_max - 1e-9:
        grid = np.append(grid, f0_max)
    return grid


def estimate_f0_shs(
    block: np.ndarray,
    sample_rate: int,
    f0_min: float = 55.0,
    f0_max: float = 400.0,
    n_harmonics: int = 5,
    compression: float = 0.85,
    bins_per_octave: int = 48,
) -> tuple[float, float]:
    """Estimate fundamental frequency of one block by subharmonic summation.

    Each candidate f on a log-frequency grid is scored as
    sum_h compression**(h-1) * |X(h*f)| over ``n_harmonics`` harmonics; the
    winning candidate is refined by parabolic interpolation on the log grid.

    Returns (f0, salience). Salience is the winning score; an all-zero block
    gives salience 0 and the caller should treat the frame as unvoiced.
    """
    if not (f0_min < f0_max < sample_rate / 2):
        raise ValueError("require f0_min < f0_max < sample_rate / 2")
    block = np.asarray(block, dtype=np.float64)
    nfft = 1 << max(11, int(4 * block.size - 1).bit_length())
    spectrum = np.abs(np.fft.rfft(block, nfft))
    freqs = np.arange(spectrum.size) * (sample_rate / nfft)

    grid = _log_frequency_grid(f0_min, f0_max, bins_per_octave)
    scores = np.zeros(grid.size)
    for h in range(1, n_harmonics + 1):
        scores += compression ** (h - 1) * np.interp(h * grid, freqs, spectrum)

    i = int(np.argmax(scores))
    salience = float(scores[i])
    if salience <= 0.0:
        return float(grid[i]), 0.0

    f0 = float(grid[i])
    if 0 < i < grid.size - 1:
        s0, s1, s2 = scores[i - 1], scores[i], scores[i + 1]
        denom = s0 - 2.0 * s1 + s2
        if denom < 0.0:
            delta = float(np.clip(0.5 * (s0 - s2) / denom, -0.5, 0.5))
            f0 = float(grid[i]) * 2.0 ** (delta / bins_per_octave)
    return float(np.clip(f0, f0_min, f0_max)), salience


def voicing_probability(
    block: np.ndarray,
    salience: float,
    sample_rate: int,
    f0_min: float = 55.0,
    f0_max: float = 400.0,
) -> float:
    """Peak normalized autocorrelation over the pitch lag range, clamped to [0, 1].

    Correlations are normalized by the energies of the two overlapping
    stretches so periodic signals score near 1 despite window tapering.
    Zero-energy or zero-salience blocks score 0.
    """
    block = np.asarray(block, dtype=np.float64)
    n = block.size
    energy = float(block @ block)
    if salience <= 0.0 or energy <= 0.0:
        return 0.0
    lag_min = max(1, int(sample_rate / f0_max))
    lag_max = min(n - 1, int(np.ceil(sample_rate / f0_min)))
    if lag_max < lag_min:
        return 0.0

    nfft = 1 << int(2 * n - 1).bit_length()
    spec = np.fft.rfft(block, nfft)
    raw = np.fft.irfft(spec * np.conj(spec), nfft)[:n]

    prefix = np.concatenate([[0.0], np.cumsum(block * block)])
    lags = np.arange(lag_min, lag_max + 1)
    head = prefix[n - lags]
    tail = prefix[n] - prefix[lags]
    denom = np.sqrt(head * tail)
    valid = denom > 0.0
    if not valid.any():
        return 0.0
    r = raw[lags[valid]] / denom[valid]
    return float(np.clip(r.max(), 0.0, 1.0))


def loudness(block: np.ndarray, exponent: float = 0.3) -> float:
    """Compressed-RMS intensity proxy: (root mean square) ** exponent."""
    block = np.asarray(block, dtype=np.float64)
    rms = float(np.sqrt(np.mean(block * block))) if block.size else 0.0
    return rms**exponent if rms > 0.0 else 0.0


def extract_prosody(signal: PcmSignal, config: ProsodyConfig = ProsodyConfig()) -> ProsodyTrack:
    """Run the full per-frame analysis over a signal."""
    blocks = frame_signal(signal, config.window, config.hop)
    frames = []
    for block in blocks:
        f0, salience = estimate_f0_shs(
            block,
            signal.sample_rate,
            config.f0_min,
            config.f0_max,
            config.n_harmonics,
            config.compression,
            config.bins_per_octave,
        )
        voicing = voicing_probability(block, salience, signal.sample_rate, config.f0_min, config.f0_max)
        if voicing < config.voicing_threshold:
            f0 = 0.0
        frames.append(ProsodyFrame(f0=f0, voicing=voicing, loudness=loudness(block)))
    return ProsodyTrack(frames=tuple(frames), frame_period=config.hop)


def track_descriptors(track: ProsodyTrack, config: ProsodyConfig = ProsodyConfig()) -> np.ndarray:
    """Per-frame descriptor rows (f0 / f0_max, voicing, loudness), shape (n_frames, 3)."""
    if not track.frames:
        return np.empty((0, 3), dtype=np.float64)
    return np.array(
        [(f.f0 / config.f0_max, f.voicing, f.loudness) for f in track.frames],
        dtype=np.float64,
    )


def extract_audio_descriptors(signal: PcmSignal, config: ProsodyConfig = ProsodyConfig()) -> np.ndarray:
    """Extract the (n_frames, 3) descriptor matrix fed to codebook encoding."""
    return track_descriptors(extract_prosody(signal, config), config)


def write_pcm(path: str | Path, signal: PcmSignal) -> None:
    """Write audio as self-describing PCM: magic, rate, count, 16-bit samples."""
    samples = np.clip(np.asarray(signal.samples, dtype=np.float64), -1.0, 1.0)
    ints = np.round(samples * _INT16_SCALE).astype("<i2")
    with Path(path).open("wb") as fh:
        fh.write(_PCM_HEADER.pack(PCM_MAGIC, signal.sample_rate, ints.size))
        fh.write(ints.tobytes())


def read_pcm(path: str | Path, sample_rate: int | None = None) -> PcmSignal:
    """Read PCM audio, either self-describing (magic header) or headerless.

    Headerless files need ``sample_rate``; 16-bit little-endian samples are
    rescaled to [-1, 1].
    """
    data = Path(path).read_bytes()
    if data[:4] == PCM_MAGIC:
        if len(data) < _PCM_HEADER.size:
            raise ValueError(f"{path}: truncated header")
        _, rate, count = _PCM_HEADER.unpack_from(data)
        body = data[_PCM_HEADER.size :]
        if len(body) < 2 * count:
            raise ValueError(f"{path}: expected {count} samples, file too short")
        ints = np.frombuffer(body, dtype="<i2", count=count)
    else:
        if sample_rate is None:
            raise ValueError(f"{path}: headerless PCM requires an explicit sample rate")
        rate = sample_rate
        ints = np.frombuffer(data, dtype="<i2")
    samples = np.clip(ints.astype(np.float64) / _INT16_SCALE, -1.0, 1.0)
    return PcmSignal(samples=samples, sample_rate=int(rate))
