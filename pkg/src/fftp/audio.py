"""Audio loading and log-mel feature extraction.

The feature recipe follows Kaldi-style fbank framing (25 ms windows every
10 ms, snip-edges, Hanning window, HTK mel scale) without dither so that
repeated runs are bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CACHE_MAGIC = b"MELS"


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE container."""


class UnsupportedFormatError(WavFormatError):
    """Well-formed WAV whose encoding we do not decode (only PCM16 is supported)."""


class TooShortError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"expected mono samples, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 16000
    n_mels: int = 128
    frame_shift_ms: float = 10.0
    frame_length_ms: float = 25.0
    window: str = "hanning"
    mel_scale: str = "htk"
    log_floor: float = 1e-10
    # None picks the smallest power of two that leaves no mel filter empty.
    n_fft: int | None = None

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.frame_length_ms < self.frame_shift_ms:
            raise ValueError("frame_length_ms must be >= frame_shift_ms")
        if self.window != "hanning":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.mel_scale != "htk":
            raise ValueError(f"unsupported mel scale {self.mel_scale!r}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def frame_length(self) -> int:
        return int(round(self.sample_rate * self.frame_length_ms / 1000.0))

    @property
    def frame_shift(self) -> int:
        return int(round(self.sample_rate * self.frame_shift_ms / 1000.0))


@dataclass
class MelSpectrogram:
    """F x T log-mel energies; rows are mel bins, columns are frames."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise ValueError(f"spectrogram must be a non-empty 2-D array, got {self.data.shape}")

    @property
    def F(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]


# --------------------------------------------------------------------------
# WAV I/O


def _parse_chunks(raw: bytes):
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE file")
    pos = 12
    chunks = {}
    while pos + 8 <= len(raw):
        cid, size = struct.unpack_from("<4sI", raw, pos)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise WavFormatError(f"truncated {cid!r} chunk")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    return chunks


def load_wav(path) -> Waveform:
    """Read a PCM16 WAV file, averaging stereo down to mono."""
    raw = Path(path).read_bytes()
    chunks = _parse_chunks(raw)
    if b"fmt " not in chunks or b"data" not in chunks:
        raise WavFormatError("missing fmt or data chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise WavFormatError("fmt chunk too short")
    audio_format, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if audio_format == 0xFFFE and len(fmt) >= 26:
        # WAVE_FORMAT_EXTENSIBLE: the real format tag leads the subformat GUID
        audio_format = struct.unpack_from("<H", fmt, 24)[0]
    if audio_format != 1 or bits != 16:
        raise UnsupportedFormatError(f"only 16-bit PCM is supported (format={audio_format}, bits={bits})")
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"only mono or stereo is supported, got {channels} channels")
    if rate <= 0:
        raise WavFormatError("sample rate must be positive")
    data = chunks[b"data"]
    n_frames = len(data) // (2 * channels)
    if n_frames == 0:
        raise WavFormatError("no audio frames")
    pcm = np.frombuffer(data[: n_frames * 2 * channels], dtype="<i2").reshape(n_frames, channels)
    samples = pcm.astype(np.float64).mean(axis=1) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> bool:
    """Write mono PCM16. Returns True if any sample had to be clipped."""
    x = np.asarray(w.samples, dtype=np.float64)
    clipped = bool(np.any(np.abs(x) > 1.0))
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16,
        b"data", len(data),
    )
    Path(path).write_bytes(header + data)
    return clipped


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Linear-interpolation resampler (not band-limited; adequate for desk-scale use)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    n_out = int(round(len(w) * target_rate / w.sample_rate))
    t = np.arange(n_out) * (w.sample_rate / target_rate)
    out = np.interp(t, np.arange(len(w)), w.samples)
    return Waveform(out, target_rate)


# --------------------------------------------------------------------------
# Features


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(n_mels: int, sample_rate: int) -> np.ndarray:
    """Center frequencies (Hz) of the triangular filters."""
    edges = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    return mel_to_hz(edges[1:-1])


def _triangles(n_mels: int, sample_rate: int, n_fft: int) -> np.ndarray:
    edges = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    bin_mel = hz_to_mel(np.arange(n_fft // 2 + 1) * sample_rate / n_fft)
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bin_mel - left) / (center - left)
    down = (right - bin_mel) / (right - center)
    return np.maximum(0.0, np.minimum(up, down))


def resolve_n_fft(cfg: MelConfig) -> int:
    if cfg.n_fft is not None:
        return cfg.n_fft
    n_fft = 1 << (cfg.frame_length - 1).bit_length()
    while _triangles(cfg.n_mels, cfg.sample_rate, n_fft).sum(axis=1).min() <= 0:
        n_fft *= 2
    return n_fft


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular weights, linear in the mel domain."""
    return _triangles(cfg.n_mels, cfg.sample_rate, resolve_n_fft(cfg))


def num_frames(n_samples: int, frame_length: int, frame_shift: int) -> int:
    """Snip-edges frame count; 0 if the signal is shorter than one frame."""
    if n_samples < frame_length:
        return 0
    return (n_samples - frame_length) // frame_shift + 1


def log_mel(w: Waveform, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"waveform is {w.sample_rate} Hz but config expects {cfg.sample_rate} Hz; resample first")
    length, shift = cfg.frame_length, cfg.frame_shift
    n = num_frames(len(w), length, shift)
    if n == 0:
        raise TooShortError(f"{len(w)} samples is shorter than one {length}-sample frame")
    frames = np.lib.stride_tricks.sliding_window_view(w.samples, length)[::shift][:n]
    # Kaldi's "hanning": symmetric Hann over the full frame
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(length) / (length - 1))
    n_fft = resolve_n_fft(cfg)
    power = np.abs(np.fft.rfft(frames * window, n=n_fft, axis=1)) ** 2
    energies = _triangles(cfg.n_mels, cfg.sample_rate, n_fft) @ power.T
    return MelSpectrogram(np.log(np.maximum(energies, cfg.log_floor)))


def pad_or_trim(s: MelSpectrogram, target_T: int, pad_value: float = 0.0) -> MelSpectrogram:
    if target_T < 1:
        raise ValueError("target_T must be >= 1")
    if s.T >= target_T:
        return MelSpectrogram(s.data[:, :target_T].copy())
    pad = np.full((s.F, target_T - s.T), pad_value, dtype=np.float32)
    return MelSpectrogram(np.concatenate([s.data, pad], axis=1))


@dataclass(frozen=True)
class Normalizer:
    """Corpus-level standardization, fitted on the training split."""

    mean: float
    std: float

    @classmethod
    def fit(cls, specs) -> "Normalizer":
        total, sq, count = 0.0, 0.0, 0
        for s in specs:
            d = s.data.astype(np.float64)
            total += d.sum()
            sq += (d * d).sum()
            count += d.size
        if count == 0:
            raise ValueError("cannot fit a normalizer on an empty corpus")
        mean = total / count
        var = max(sq / count - mean * mean, 0.0)
        return cls(float(mean), float(np.sqrt(var)) or 1.0)

    def __call__(self, s: MelSpectrogram) -> MelSpectrogram:
        return MelSpectrogram((s.data - np.float32(self.mean)) / np.float32(self.std))


# --------------------------------------------------------------------------
# Spectrogram cache: "MELS", u32 F, u32 T, F*T float32, all little-endian


def save_cache(path, s: MelSpectrogram) -> None:
    header = CACHE_MAGIC + struct.pack("<II", s.F, s.T)
    Path(path).write_bytes(header + s.data.astype("<f4").tobytes(order="C"))


def load_cache(path) -> MelSpectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a MELS cache file")
    F, T = struct.unpack_from("<II", raw, 4)
    if len(raw) != 12 + 4 * F * T:
        raise ValueError(f"{path}: expected {F}x{T} payload, got {len(raw) - 12} bytes")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(F, T)
    return MelSpectrogram(data.astype(np.float32))
