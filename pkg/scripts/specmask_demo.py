"""Mask one synthetic clip with SpecMask and SpecAugment; write PGM previews and the event list."""

import argparse
from pathlib import Path

import numpy as np

from fftp.audio import log_mel, pad_or_trim
from fftp.pgm import write_pgm
from fftp.specmask import AUDIOSET_SPECMASK, apply_specaugment, apply_specmask, sample_rng, write_events_csv
from fftp.synthdata import SynthSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/specmask")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    clip = generate(SynthSpec(n_samples=1, duration_s=10.0, task="multilabel", seed=args.seed)).waveforms[0]
    s = log_mel(clip)
    s = pad_or_trim(s, 1000, float(s.data.mean()))
    res = apply_specmask(s, AUDIOSET_SPECMASK, sample_rng(args.seed, 0))
    aug = apply_specaugment(s, max_t=400, max_f=5, rng=sample_rng(args.seed, 1))

    write_pgm(out / "original.pgm", s.data)
    write_pgm(out / "specmask.pgm", res.spectrogram.data)
    write_pgm(out / "specaugment.pgm", aug.data)
    write_events_csv(out / "specmask_events.csv", res.events)
    full = sum(e.kind == "full_frequency" for e in res.events)
    print(f"SpecMask: {len(res.events)} masks ({full} full-frequency), {res.mask_map.masked_area} cells "
          f"({res.mask_map.masked_area / s.data.size:.1%})")
    print(f"SpecAugment: {int(np.sum(aug.data != s.data))} cells changed")
    print(f"previews in {out}")


if __name__ == "__main__":
    main()
