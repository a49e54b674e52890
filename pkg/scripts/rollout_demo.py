"""Train a small FFTP and a small square model, then write attention-rollout heatmaps for one clip.

Heatmaps are PGM images (low frequencies at the bottom) and CSV matrices.
"""

import argparse
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from fftp.encoder import EncoderConfig, attention_rollout, rollout_heatmap
from fftp.experiments import FFTP_MATCHED, N_FRAMES, N_MELS, SQUARE, DeskSetup, harmonic_corpus
from fftp.model import AudioClassifier
from fftp.pgm import write_pgm
from fftp.trainer import TrainConfig, prepare, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/rollout")
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--epochs", type=int, default=4)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ds = harmonic_corpus(DeskSetup(n_samples=args.n))
    train_set, val_set = ds.split(0.2)
    enc = EncoderConfig(depth=2, dim=64, heads=4, n_classes=ds.n_classes)
    with threadpool_limits(limits=1):
        for name, patch in (("fftp", FFTP_MATCHED), ("square", SQUARE)):
            model = AudioClassifier.create(patch, enc, N_MELS, N_FRAMES, seed=0)
            _, hist = train(model, train_set, val_set, TrainConfig(epochs=args.epochs))
            spec = prepare(model, val_set.subset([0]), fit_normalizer=False)[0]
            _, trace = model.forward(spec[None], capture_attention=True)
            heat = rollout_heatmap(attention_rollout(trace)[0, 0], model.grid, patch, N_MELS, N_FRAMES)
            write_pgm(out / f"{name}.pgm", heat, rescale=False)
            np.savetxt(out / f"{name}.csv", heat, delimiter=",", fmt="%.6f")
            write_pgm(out / "input.pgm", spec)
            print(f"{name}: val accuracy {hist[-1]['val_accuracy']:.3f}, heatmap peak frame {int(heat.max(0).argmax())}")
    print(f"label of the clip: {val_set.class_names[val_set.labels[0]]}; images in {out}")


if __name__ == "__main__":
    main()
