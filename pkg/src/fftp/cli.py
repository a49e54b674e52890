"""Command-line entry point: ``fftp <subcommand> [--config run.json] [overrides]``.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.
Failures print a single line to stderr of the form
``fftp: error: <kind>: <key or exception>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as C
from .audio import MelSpectrogram, load_cache, load_wav, log_mel, pad_or_trim, resample, save_cache
from .encoder import attention_rollout, rollout_heatmap
from .flopsbench import SQUARE_PADDED_T, VIT_BASE, count_flops, emit_table, measure_latency
from .model import AudioClassifier
from .patcher import AUDIOSET_FFTP, AUDIOSET_SQUARE, PatchConfig, patch_count
from .pgm import write_pgm
from .specmask import apply_specaugment, apply_specmask, sample_rng, write_events_csv
from .synthdata import DEFAULT_CLASSES, SynthSpec, generate, harmonic_classes, load_labeled_dir, write_dataset
from .trainer import evaluate, prepare, train

log = logging.getLogger("fftp")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run-config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a dotted config key, e.g. train.epochs=3")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--budget", type=int, help="SpecMask budget area (cells)")
    p.add_argument("--mask-type", choices=["none", "specmask", "specaugment"])
    p.add_argument("--data", help="dataset directory containing labels.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fftp", description="FFTP/SpecMask spectrogram toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="write a synthetic labeled WAV corpus")
    _common(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--task", choices=["singlelabel", "multilabel"], default="singlelabel")
    p.add_argument("--classes", choices=["default", "harmonic"], default="default")
    p.add_argument("--duration", type=float, default=1.0)

    p = sub.add_parser("melspec", help="compute log-mel spectrogram caches")
    _common(p)
    p.add_argument("inputs", nargs="*", help="WAV files (or use --data)")
    p.add_argument("--no-pad", action="store_true", help="keep the natural frame count")

    p = sub.add_parser("mask", help="apply SpecMask/SpecAugment to caches")
    _common(p)
    p.add_argument("inputs", nargs="+", help=".mels cache files")

    p = sub.add_parser("tokenize", help="report patch/token counts")
    _common(p)
    p.add_argument("inputs", nargs="+", help=".mels cache files")
    p.add_argument("--audioset-geometries", action="store_true", help="use the five FFTP geometries and the square baseline")

    p = sub.add_parser("train", help="train a classifier")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("rollout", help="attention-rollout heatmaps")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("inputs", nargs="+", help="WAV files or .mels caches")

    p = sub.add_parser("bench", help="FLOPs/latency table over patch geometries")
    _common(p)
    p.add_argument("--convention", choices=["flops2", "mac1"], default="flops2")
    p.add_argument("--shape", type=int, nargs=2, default=[128, 1000], metavar=("F", "T"))
    p.add_argument("--latency", action="store_true", help="also time the desk-scale model")
    p.add_argument("--trials", type=int, default=20)
    return parser


def _overrides(args) -> list:
    ov = []
    for flag in ("lr", "epochs", "batch_size", "budget", "mask_type", "data", "seed", "threads"):
        v = getattr(args, flag, None)
        if v is not None:
            ov.append((flag, v))
    if args.out is not None:
        ov.append(("paths.out", args.out))
    for item in args.set:
        if "=" not in item:
            raise C.ConfigError(item, "override must look like KEY=VALUE")
        k, v = item.split("=", 1)
        ov.append((k.strip(), C.parse_value(v)))
    return ov


def _out(cfg) -> Path:
    out = Path(cfg["paths"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(cfg):
    data = Path(cfg["paths"]["data"])
    return load_labeled_dir(data, task=cfg["train"]["task"], sample_rate=cfg["frontend"]["sample_rate"])


# --------------------------------------------------------------------------
# subcommands


def cmd_synth_gen(args, cfg):
    classes = harmonic_classes() if args.classes == "harmonic" else DEFAULT_CLASSES
    spec = SynthSpec(n_samples=args.n, duration_s=args.duration, sample_rate=cfg["frontend"]["sample_rate"],
                     classes=classes, task=args.task, seed=cfg["seed"])
    ds = generate(spec)
    root = write_dataset(ds, _out(cfg), spec)
    print(f"wrote {len(ds)} clips to {root}")


def cmd_melspec(args, cfg):
    mel = C.mel_config(cfg)
    if args.inputs:
        paths = [Path(p) for p in args.inputs]
    elif cfg["paths"]["data"]:
        paths = [Path(p) for p in _dataset(cfg).paths]
    else:
        raise C.ConfigError("paths.data", "give WAV inputs or --data")

    def one(path):
        w = load_wav(path)
        if w.sample_rate != mel.sample_rate:
            w = resample(w, mel.sample_rate)
        return log_mel(w, mel)

    with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
        specs = list(pool.map(one, paths))
    n_frames = cfg["frontend"]["n_frames"]
    pad = float(np.mean(np.concatenate([s.data.ravel() for s in specs]), dtype=np.float64))
    out = _out(cfg)
    for path, s in zip(paths, specs):
        if not args.no_pad:
            s = pad_or_trim(s, n_frames, pad)
        save_cache(out / (path.stem + ".mels"), s)
        print(f"{path.stem}.mels {s.F}x{s.T}")


def cmd_mask(args, cfg):
    kind = cfg["mask"]["type"]
    if kind == "none":
        kind = "specmask"
    m = cfg["mask"]
    out = _out(cfg)
    for i, path in enumerate(args.inputs):
        s = load_cache(path)
        stem = Path(path).name.removesuffix(".mels")
        rng = sample_rng(cfg["seed"], i)
        if kind == "specmask":
            mcfg = C.specmask_config(cfg)
            try:
                mcfg.check(s.F, s.T)
            except ValueError as e:
                raise C.ConfigError("mask", str(e)) from None
            res = apply_specmask(s, mcfg, rng)
            masked = res.spectrogram
            write_events_csv(out / f"{stem}.events.csv", res.events)
            print(f"{stem}: {len(res.events)} masks, area {res.mask_map.masked_area}"
                  + (" (attempt cap reached)" if res.exhausted else ""))
        else:
            masked = apply_specaugment(s, m["max_t"], m["max_f"], m["n_t"], m["n_f"], rng)
            print(f"{stem}: specaugment applied")
        save_cache(out / f"{stem}.masked.mels", masked)
        write_pgm(out / f"{stem}.pgm", s.data)
        write_pgm(out / f"{stem}.masked.pgm", masked.data)


def cmd_tokenize(args, cfg):
    configs = [*AUDIOSET_FFTP, AUDIOSET_SQUARE] if args.audioset_geometries else [C.patch_config(cfg)]
    for path in args.inputs:
        s = load_cache(path)
        for p in configs:
            n_f, n_t = patch_count(p, s.F, s.T)
            print(f"{Path(path).name} {p.mode} patch={p.label()} stride={p.stride_label()} grid={n_f}x{n_t} patches={n_f * n_t}")


def _build_model(cfg, ds) -> AudioClassifier:
    patch = C.patch_config(cfg)
    n_mels, n_frames = cfg["frontend"]["n_mels"], cfg["frontend"]["n_frames"]
    enc = C.encoder_config(cfg, n_classes=ds.n_classes)
    return AudioClassifier.create(patch, enc, n_mels, n_frames, seed=cfg["seed"],
                                  class_names=list(ds.class_names), mel=C.mel_config(cfg))


def cmd_train(args, cfg):
    ds = _dataset(cfg)
    if len(ds) == 0:
        raise C.ConfigError("paths.data", "dataset is empty")
    train_set, val_set = ds.split(cfg["paths"]["val_fraction"], seed=cfg["seed"])
    model = _build_model(cfg, ds)
    tcfg = C.train_config(cfg, ds.task)
    out = _out(cfg)
    (out / "run_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))
    _, history = train(model, train_set, val_set, tcfg, out_dir=out)
    print(json.dumps(history[-1], sort_keys=True))


def cmd_eval(args, cfg):
    model = AudioClassifier.load(args.checkpoint)
    ds = _dataset(cfg)
    if list(ds.class_names) != list(model.class_names):
        raise C.ConfigError("paths.data", f"class names {ds.class_names} differ from checkpoint {model.class_names}")
    specs = prepare(model, ds, fit_normalizer=False)
    task = cfg["train"]["task"] or ds.task
    report = evaluate(model, specs, ds.targets, task)
    result = {k: v for k, v in vars(report).items() if v is not None}
    (_out(cfg) / "eval.json").write_text(json.dumps(result, indent=2, sort_keys=True))
    print(json.dumps(result, sort_keys=True))


def _rollout_input(path, model: AudioClassifier) -> MelSpectrogram:
    if str(path).endswith(".mels"):
        s = load_cache(path)
    else:
        w = load_wav(path)
        if w.sample_rate != model.mel.sample_rate:
            w = resample(w, model.mel.sample_rate)
        s = log_mel(w, model.mel)
    pad = model.normalizer.mean if model.normalizer is not None else 0.0
    s = pad_or_trim(s, model.n_frames, pad)
    return model.normalizer(s) if model.normalizer is not None else s


def cmd_rollout(args, cfg):
    model = AudioClassifier.load(args.checkpoint)
    out = _out(cfg)
    for path in args.inputs:
        s = _rollout_input(path, model)
        _, trace = model.forward(s.data[None], capture_attention=True)
        relevance = attention_rollout(trace)[0, 0]
        heat = rollout_heatmap(relevance, model.grid, model.patch, s.F, s.T)
        stem = Path(path).name.removesuffix(".mels").removesuffix(".wav")
        write_pgm(out / f"{stem}.rollout.pgm", heat, rescale=False)
        np.savetxt(out / f"{stem}.rollout.csv", heat, delimiter=",", fmt="%.6f")
        print(f"{stem}: peak frame {int(heat.max(0).argmax())}")


def cmd_bench(args, cfg):
    F, T = args.shape
    configs = [*AUDIOSET_FFTP]
    if F == 128:
        configs.append(AUDIOSET_SQUARE)
    reports = []
    desk = C.encoder_config(cfg, n_classes=10)
    for p in configs:
        if p.mode == "fftp" and p.patch_f != F:
            p = PatchConfig.fftp(F, p.patch_t, p.stride_t)
        r = count_flops(VIT_BASE, p, F, T, convention=args.convention)
        if args.latency:
            lat = measure_latency(desk, p, F, T, trials=args.trials, seed=cfg["seed"])
            r = type(r)(**{**vars(r), "latency_ms": lat.median_ms})
        reports.append(r)
    if F == 128 and T == 1000:
        # square baseline also counted on 1024 frames (10 s padded to a power of two)
        reports.append(count_flops(VIT_BASE, AUDIOSET_SQUARE, F, SQUARE_PADDED_T, convention=args.convention))
    csv_text, table = emit_table(reports)
    out = _out(cfg)
    (out / "bench.csv").write_text(csv_text)
    (out / "bench.txt").write_text(table)
    print(table, end="")


COMMANDS = {
    "synth-gen": (cmd_synth_gen, False),
    "melspec": (cmd_melspec, False),
    "mask": (cmd_mask, False),
    "tokenize": (cmd_tokenize, False),
    "train": (cmd_train, True),
    "eval": (cmd_eval, True),
    "rollout": (cmd_rollout, False),
    "bench": (cmd_bench, False),
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FFTP_LOG", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    func, need_data = COMMANDS[args.command]
    try:
        cfg = C.validate(C.load(args.config, _overrides(args)), need_data=need_data)
        with threadpool_limits(limits=cfg["threads"]):
            func(args, cfg)
    except C.ConfigError as e:
        print(f"fftp: error: config: {e.key}: {e.message}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - one-line report for batch callers
        log.debug("failure", exc_info=True)
        msg = str(e).replace("\n", " ")
        print(f"fftp: error: runtime: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
