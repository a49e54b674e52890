"""Analytic FLOPs at ViT-Base width plus measured latency of a small encoder.

Usage: python scripts/efficiency_table.py [--out DIR] [--trials N] [--convention flops2|mac1]
"""

import argparse
from dataclasses import replace
from pathlib import Path

from fftp.encoder import EncoderConfig
from fftp.flopsbench import SQUARE_PADDED_T, VIT_BASE, count_flops, emit_table, measure_latency, reduction
from fftp.patcher import AUDIOSET_FFTP, AUDIOSET_SQUARE


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/efficiency")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--convention", choices=["flops2", "mac1"], default="flops2")
    args = ap.parse_args()

    desk = EncoderConfig(depth=4, dim=128, heads=4, n_classes=10)
    reports = []
    for p, T in [(p, 1000) for p in AUDIOSET_FFTP] + [(AUDIOSET_SQUARE, SQUARE_PADDED_T)]:
        r = count_flops(VIT_BASE, p, 128, T, convention=args.convention)
        lat = measure_latency(desk, p, 128, T, trials=args.trials)
        reports.append(replace(r, latency_ms=lat.median_ms))
    csv_text, table = emit_table(reports)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "efficiency.csv").write_text(csv_text)
    print(table, end="")
    print(f"\nFLOPs saved by 196-token FFTP vs 1212-token square: {reduction(reports[-1], reports[1]):.2%}")
    print("gflops: ViT-Base dims (depth 12, D 768); latency_ms: depth 4, D 128, batch 1, one thread")


if __name__ == "__main__":
    main()
