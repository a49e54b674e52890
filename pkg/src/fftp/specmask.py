"""Budgeted, non-overlapping spectrogram masking (SpecMask) and a SpecAugment baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .audio import MelSpectrogram

FULL = "full_frequency"
LOCAL = "local"


@dataclass(frozen=True)
class SpecMaskConfig:
    budget_area: int
    max_h: int
    max_w: int
    full_freq_prob: float = 0.7
    fill: str = "mean"
    per_mask_attempts: int = 100
    global_attempt_cap: int = 1000

    def __post_init__(self):
        if self.fill not in ("mean", "zero"):
            raise ValueError(f"fill must be 'mean' or 'zero', got {self.fill!r}")
        if not 0.0 <= self.full_freq_prob <= 1.0:
            raise ValueError("full_freq_prob must lie in [0, 1]")
        if self.budget_area < 0 or self.max_h < 1 or self.max_w < 1:
            raise ValueError("budget_area must be >= 0 and max_h, max_w >= 1")
        if self.per_mask_attempts < 1 or self.global_attempt_cap < 1:
            raise ValueError("attempt limits must be >= 1")

    def check(self, H: int, W: int) -> None:
        if self.budget_area > H * W:
            raise ValueError(f"budget {self.budget_area} exceeds spectrogram area {H * W}")
        if self.max_h > H or self.max_w > W:
            raise ValueError(f"max mask ({self.max_h}, {self.max_w}) exceeds spectrogram ({H}, {W})")


# Settings used for 10 s AudioSet clips and 1 s speech commands respectively.
AUDIOSET_SPECMASK = SpecMaskConfig(budget_area=25600, max_h=128, max_w=128)
SPEECHCOMMANDS_SPECMASK = SpecMaskConfig(budget_area=1024, max_h=128, max_w=16)


@dataclass(frozen=True)
class MaskEvent:
    x: int  # first row (mel bin)
    y: int  # first column (frame)
    h: int
    w: int
    kind: str

    @property
    def area(self) -> int:
        return self.h * self.w


@dataclass
class MaskMap:
    M: np.ndarray
    masked_area: int = 0


@dataclass
class SpecMaskResult:
    spectrogram: MelSpectrogram
    mask_map: MaskMap
    events: list[MaskEvent] = field(default_factory=list)
    exhausted: bool = False  # attempt cap hit before reaching the budget


def apply_specmask(s: MelSpectrogram, cfg: SpecMaskConfig, rng: np.random.Generator) -> SpecMaskResult:
    X = s.data
    H, W = X.shape
    cfg.check(H, W)
    out = X.copy()
    M = np.zeros((H, W), dtype=bool)
    fill = np.float32(X.mean(dtype=np.float64)) if cfg.fill == "mean" else np.float32(0.0)
    events: list[MaskEvent] = []
    masked_area = 0
    attempts = 0

    while masked_area < cfg.budget_area and attempts < cfg.global_attempt_cap:
        if rng.random() < cfg.full_freq_prob:
            kind, h = FULL, H
        else:
            kind, h = LOCAL, int(rng.integers(1, cfg.max_h + 1))
        w = int(rng.integers(1, cfg.max_w + 1))

        for _ in range(cfg.per_mask_attempts):
            if attempts >= cfg.global_attempt_cap:
                break
            attempts += 1
            x = int(rng.integers(0, H - h + 1))
            y = int(rng.integers(0, W - w + 1))
            if not M[x : x + h, y : y + w].any():
                out[x : x + h, y : y + w] = fill
                M[x : x + h, y : y + w] = True
                masked_area += h * w
                events.append(MaskEvent(x, y, h, w, kind))
                break
        # no free origin within the attempt limit: redraw the mask shape

    return SpecMaskResult(
        MelSpectrogram(out),
        MaskMap(M, masked_area),
        events,
        exhausted=masked_area < cfg.budget_area,
    )


def apply_specaugment(
    s: MelSpectrogram,
    max_t: int,
    max_f: int,
    n_t: int = 2,
    n_f: int = 2,
    rng: np.random.Generator | None = None,
) -> MelSpectrogram:
    """Independent full-height time masks and full-width frequency masks, mean-filled."""
    X = s.data
    F, T = X.shape
    if max_t > T or max_f > F:
        raise ValueError(f"mask limits ({max_t}, {max_f}) exceed spectrogram ({F}, {T})")
    rng = rng if rng is not None else np.random.default_rng()
    out = X.copy()
    fill = np.float32(X.mean(dtype=np.float64))
    for _ in range(n_t):
        w = int(rng.integers(0, max_t + 1))
        y = int(rng.integers(0, T - w + 1))
        out[:, y : y + w] = fill
    for _ in range(n_f):
        h = int(rng.integers(0, max_f + 1))
        x = int(rng.integers(0, F - h + 1))
        out[x : x + h, :] = fill
    return MelSpectrogram(out)


def sample_rng(seed: int, index: int, epoch: int = 0) -> np.random.Generator:
    """Per-sample stream, independent of how samples are spread over workers."""
    return np.random.default_rng([seed, epoch, index])


def write_events_csv(path, events) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "h", "w", "kind"])
        for e in events:
            writer.writerow([e.x, e.y, e.h, e.w, e.kind])


def read_events_csv(path) -> list[MaskEvent]:
    with open(path, newline="") as f:
        return [
            MaskEvent(int(r["x"]), int(r["y"]), int(r["h"]), int(r["w"]), r["kind"])
            for r in csv.DictReader(f)
        ]
