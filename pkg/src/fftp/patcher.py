"""Spectrogram tokenization: full-frequency temporal patches or square patches.

A patch embedding is a strided convolution whose kernel covers the whole
patch, which is the same as an affine map applied to every flattened patch.
Patches are flattened frequency-major and ordered time-fastest, i.e. token
``i * n_t + j`` covers rows ``[i*s_f, i*s_f + F_p)`` and columns
``[j*s_t, j*s_t + T_p)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PatchConfig:
    patch_f: int
    patch_t: int
    stride_f: int
    stride_t: int
    mode: str = "fftp"

    def __post_init__(self):
        if self.mode not in ("fftp", "square"):
            raise ValueError(f"mode must be 'fftp' or 'square', got {self.mode!r}")
        for name in ("patch_f", "patch_t", "stride_f", "stride_t"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def fftp(cls, n_mels: int, patch_t: int, stride_t: int) -> "PatchConfig":
        return cls(n_mels, patch_t, n_mels, stride_t, "fftp")

    @classmethod
    def square(cls, size: int = 16, stride: int = 10) -> "PatchConfig":
        return cls(size, size, stride, stride, "square")

    @property
    def area(self) -> int:
        return self.patch_f * self.patch_t

    def to_dict(self) -> dict:
        return asdict(self)

    def label(self) -> str:
        return f"{self.patch_f}x{self.patch_t}"

    def stride_label(self) -> str:
        return f"{self.stride_f}x{self.stride_t}"


# Patch geometries evaluated on 128 x 1000 AudioSet inputs.
AUDIOSET_FFTP = (
    PatchConfig.fftp(128, 50, 10),
    PatchConfig.fftp(128, 25, 5),
    PatchConfig.fftp(128, 10, 4),
    PatchConfig.fftp(128, 10, 2),
    PatchConfig.fftp(128, 10, 1),
)
AUDIOSET_SQUARE = PatchConfig.square(16, 10)


def validate(cfg: PatchConfig, F: int, T: int) -> None:
    if cfg.patch_f > F or cfg.patch_t > T:
        raise GeometryError(f"patch {cfg.label()} does not fit a {F}x{T} spectrogram")
    if cfg.mode == "fftp" and (cfg.patch_f != F or cfg.stride_f != F):
        raise GeometryError(f"fftp patches must span all {F} bins (got patch_f={cfg.patch_f}, stride_f={cfg.stride_f})")


def patch_count(cfg: PatchConfig, F: int, T: int) -> tuple[int, int]:
    """(n_f, n_t): number of window positions along frequency and time."""
    validate(cfg, F, T)
    return (F - cfg.patch_f) // cfg.stride_f + 1, (T - cfg.patch_t) // cfg.stride_t + 1


def extract_patches(spec, cfg: PatchConfig) -> np.ndarray:
    """Flattened patches of a single (F, T) spectrogram or a (B, F, T) batch.

    Returns (N, F_p*T_p) or (B, N, F_p*T_p).
    """
    x = getattr(spec, "data", spec)
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    B, F, T = x.shape
    n_f, n_t = patch_count(cfg, F, T)
    win = np.lib.stride_tricks.sliding_window_view(x, (cfg.patch_f, cfg.patch_t), axis=(1, 2))
    win = win[:, :: cfg.stride_f, :: cfg.stride_t][:, :n_f, :n_t]
    out = win.reshape(B, n_f * n_t, cfg.area)
    return out[0] if single else out


@dataclass
class EmbeddingWeights:
    W_c: np.ndarray  # (D, patch_f * patch_t)
    bias: np.ndarray  # (D,)

    @property
    def D(self) -> int:
        return self.W_c.shape[0]

    @classmethod
    def init(cls, cfg: PatchConfig, D: int, rng: np.random.Generator, dtype=np.float32) -> "EmbeddingWeights":
        # same scale as a default conv init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
        bound = 1.0 / np.sqrt(cfg.area)
        W = rng.uniform(-bound, bound, size=(D, cfg.area)).astype(dtype)
        b = rng.uniform(-bound, bound, size=D).astype(dtype)
        return cls(W, b)


@dataclass
class TokenSequence:
    tokens: np.ndarray  # (B, N', D)
    patch_grid: tuple[int, int]
    has_class_token: bool = False

    def __post_init__(self):
        n = self.patch_grid[0] * self.patch_grid[1] + int(self.has_class_token)
        if self.tokens.ndim != 3 or self.tokens.shape[1] != n:
            raise ValueError(f"tokens shape {self.tokens.shape} inconsistent with grid {self.patch_grid}")

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[1]


def embed(patches: np.ndarray, w: EmbeddingWeights, patch_grid: tuple[int, int] | None = None) -> TokenSequence:
    patches = np.asarray(patches)
    if patches.ndim == 2:
        patches = patches[None]
    if patches.shape[-1] != w.W_c.shape[1]:
        raise ValueError(f"patch length {patches.shape[-1]} != kernel width {w.W_c.shape[1]}")
    if patch_grid is None:
        patch_grid = (1, patches.shape[1])
    tokens = patches @ w.W_c.T + w.bias
    return TokenSequence(tokens, patch_grid)


def tokenize(spec, cfg: PatchConfig, w: EmbeddingWeights) -> TokenSequence:
    x = np.asarray(getattr(spec, "data", spec))
    F, T = x.shape[-2:]
    return embed(extract_patches(x, cfg), w, patch_count(cfg, F, T))


def prepend_class_token(ts: TokenSequence, cls: np.ndarray, pos: np.ndarray) -> TokenSequence:
    """Prepend ``cls`` and add the positional table to all N+1 tokens."""
    B, N, D = ts.tokens.shape
    if ts.has_class_token:
        raise ValueError("sequence already carries a class token")
    if N == 0:
        raise ValueError("cannot prepend a class token to an empty sequence")
    if pos.shape != (N + 1, D):
        raise ValueError(f"positional table must be {(N + 1, D)}, got {pos.shape}")
    head = np.broadcast_to(cls.reshape(1, 1, D), (B, 1, D))
    out = np.concatenate([head, ts.tokens], axis=1) + pos
    return TokenSequence(out, ts.patch_grid, has_class_token=True)
