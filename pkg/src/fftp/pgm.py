"""Minimal 8-bit PGM (P5) reader/writer for spectrogram and heatmap previews."""

import re
from pathlib import Path

import numpy as np


def write_pgm(path, image: np.ndarray, rescale: bool = True) -> None:
    """8-bit binary PGM (P5).

    With ``rescale`` the image is min-max scaled, otherwise it must already lie
    in [0, 1]. Row 0 is written at the bottom so low mel bins sit at the bottom
    as in a usual spectrogram plot.
    """
    img = np.asarray(image, dtype=np.float64)
    if rescale:
        lo, hi = img.min(), img.max()
        scaled = np.zeros_like(img) if hi <= lo else (img - lo) / (hi - lo)
    else:
        scaled = np.clip(img, 0.0, 1.0)
    pix = np.round(scaled[::-1] * 255).astype(np.uint8)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)[::-1]
