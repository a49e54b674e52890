"""Desk-scale experiments: FFTP vs square patching on a synthetic harmonic corpus."""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field, replace

from .encoder import EncoderConfig
from .model import AudioClassifier
from .patcher import PatchConfig
from .synthdata import SynthSpec, generate, harmonic_classes
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

HARMONIC_F0S = (200.0, 230.0, 260.0, 300.0, 340.0, 400.0, 460.0, 520.0)
N_MELS = 128
N_FRAMES = 100  # 1 s clips give 98 frames

SQUARE = PatchConfig.square(16, 10)
# 128 x 2 patches have the same kernel width (256) as 16 x 16 square patches
FFTP_MATCHED = PatchConfig.fftp(N_MELS, 2, 2)
FFTP_SWEEP = (
    PatchConfig.fftp(N_MELS, 4, 4),
    PatchConfig.fftp(N_MELS, 4, 2),
    PatchConfig.fftp(N_MELS, 4, 1),
)


@dataclass
class DeskSetup:
    n_samples: int = 1000
    snr_db: tuple = (-12.0, -2.0)
    corpus_seed: int = 1
    val_fraction: float = 0.2
    seeds: tuple = (0, 1, 2)
    encoder: EncoderConfig = EncoderConfig(depth=2, dim=64, heads=4, mlp_ratio=4.0)
    train: TrainConfig = TrainConfig(epochs=4, batch_size=32, peak_lr=1e-3, weight_decay=0.01)
    configs: dict = field(default_factory=lambda: {
        "square": SQUARE,
        "fftp_matched": FFTP_MATCHED,
        **{f"fftp_t4_s{p.stride_t}": p for p in FFTP_SWEEP},
    })


def harmonic_corpus(setup: DeskSetup):
    spec = SynthSpec(n_samples=setup.n_samples, classes=harmonic_classes(HARMONIC_F0S),
                     snr_db=setup.snr_db, seed=setup.corpus_seed)
    return generate(spec)


def run_desk_comparison(setup: DeskSetup = DeskSetup()) -> dict:
    """Final-epoch validation accuracy for every (config, seed).

    Returns ``{"chance", "accuracy": {name: [acc per seed]}, "median": {...},
    "n_params": {...}, "tokens": {...}, "seconds": ...}``.
    """
    t0 = time.perf_counter()
    ds = harmonic_corpus(setup)
    train_set, val_set = ds.split(setup.val_fraction, seed=setup.corpus_seed)
    enc = replace(setup.encoder, n_classes=ds.n_classes)
    acc, n_params, tokens = {}, {}, {}
    for name, patch in setup.configs.items():
        acc[name] = []
        for seed in setup.seeds:
            model = AudioClassifier.create(patch, enc, N_MELS, N_FRAMES, seed=seed)
            _, history = train(model, train_set, val_set, replace(setup.train, seed=seed))
            acc[name].append(history[-1]["val_accuracy"])
            n_params[name] = model.n_params
            tokens[name] = model.grid[0] * model.grid[1] + 1
            log.info("%s seed %d: %.3f", name, seed, acc[name][-1])
    return {
        "chance": 1.0 / ds.n_classes,
        "accuracy": acc,
        "median": {k: statistics.median(v) for k, v in acc.items()},
        "n_params": n_params,
        "tokens": tokens,
        "seconds": time.perf_counter() - t0,
    }
