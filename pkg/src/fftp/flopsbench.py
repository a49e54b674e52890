"""Analytic FLOPs accounting and latency measurement for patch configurations.

Counting convention: a multiply-add is 2 FLOPs ("flops2") or 1 ("mac1").
Only matrix products are counted; softmax, layer norm, GELU, residual adds
and bias adds are excluded. Per encoder layer with N' tokens, width D and
MLP ratio r::

    QKV + output projection   8 N' D^2
    scores + weighted sum     4 N'^2 D
    MLP                       4 r N' D^2

plus 2 N P D for the patch embedding (P = patch area) and 2 D C for the head.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .encoder import EncoderConfig
from .model import AudioClassifier
from .patcher import PatchConfig, patch_count

CONVENTIONS = {"flops2": 2, "mac1": 1}


@dataclass(frozen=True)
class FlopsReport:
    patch: PatchConfig
    n_patches: int
    n_tokens: int
    patch_embed: int
    attn_linear: int
    attn_matmul: int
    mlp: int
    head: int
    convention: str = "flops2"
    latency_ms: float | None = None

    @property
    def total(self) -> int:
        return self.patch_embed + self.attn_linear + self.attn_matmul + self.mlp + self.head

    @property
    def gflops(self) -> float:
        return self.total / 1e9


def count_flops(enc: EncoderConfig, patch: PatchConfig, F: int, T: int, n_classes: int | None = None,
                class_token: bool = True, convention: str = "flops2") -> FlopsReport:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {sorted(CONVENTIONS)}")
    k = CONVENTIONS[convention]
    n_f, n_t = patch_count(patch, F, T)
    N = n_f * n_t
    n = N + int(class_token)
    D, L, r = enc.dim, enc.depth, enc.mlp_ratio
    C = enc.n_classes if n_classes is None else n_classes
    # each term is (multiply-adds) * k
    return FlopsReport(
        patch=patch,
        n_patches=N,
        n_tokens=n,
        patch_embed=k * N * patch.area * D,
        attn_linear=k * L * 4 * n * D * D,
        attn_matmul=k * L * 2 * n * n * D,
        mlp=int(round(k * L * 2 * r * n * D * D)),
        head=k * D * C,
        convention=convention,
    )


@dataclass(frozen=True)
class LatencyStats:
    median_ms: float
    mean_ms: float
    p95_ms: float
    trials: int


def measure_latency(enc: EncoderConfig, patch: PatchConfig, F: int, T: int, trials: int = 20,
                    warmup: int = 3, seed: int = 0) -> LatencyStats:
    """Batch-1 forward latency (patch extraction + embedding + encoder)."""
    if trials < 10:
        raise ValueError("need at least 10 timed trials")
    model = AudioClassifier.create(patch, enc, F, T, seed=seed)
    x = np.random.default_rng(seed).standard_normal((1, F, T)).astype(np.float32)
    times = []
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            model.forward(x)
        for _ in range(trials):
            t0 = time.perf_counter()
            model.forward(x)
            times.append((time.perf_counter() - t0) * 1e3)
    times.sort()
    p95 = times[min(len(times) - 1, int(np.ceil(0.95 * len(times))) - 1)]
    return LatencyStats(statistics.median(times), statistics.fmean(times), p95, trials)


COLUMNS = ("mode", "patch", "stride", "patches", "tokens", "gflops", "latency_ms")


def _row(r: FlopsReport) -> list:
    return [
        r.patch.mode,
        r.patch.label(),
        r.patch.stride_label(),
        r.n_patches,
        r.n_tokens,
        f"{r.gflops:.4f}",
        "" if r.latency_ms is None else f"{r.latency_ms:.3f}",
    ]


def sort_reports(reports):
    return sorted(reports, key=lambda r: (r.n_patches, r.patch.mode, r.patch.patch_t, r.patch.stride_t))


def emit_table(reports) -> tuple[str, str]:
    """(CSV text, aligned plain-text table), rows ordered by patch count."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to tabulate")
    rows = [_row(r) for r in sort_reports(reports)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    writer.writerows(rows)
    table = [list(COLUMNS)] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(COLUMNS))]
    text = "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in table)
    return buf.getvalue(), text + "\n"


def reduction(base: FlopsReport, other: FlopsReport) -> float:
    """Fractional FLOPs saved by ``other`` relative to ``base``."""
    return 1.0 - other.total / base.total


# Frame count the square baseline is also reported on (10 s padded to 1024).
SQUARE_PADDED_T = 1024

# Dimensions of the transformer analysed in the efficiency comparison.
VIT_BASE = EncoderConfig(depth=12, dim=768, heads=12, mlp_ratio=4.0, n_classes=527, max_tokens=2048)


def report_dict(r: FlopsReport) -> dict:
    d = asdict(r)
    d["patch"] = r.patch.to_dict()
    d["total"] = r.total
    return d
