"""Training and evaluation: mixup, losses, AdamW with warmup-cosine schedule, mAP."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .audio import MelConfig, MelSpectrogram, Normalizer, Waveform, log_mel, pad_or_trim
from .model import AudioClassifier
from .specmask import SpecMaskConfig, apply_specaugment, apply_specmask, sample_rng

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_steps: int | None = None  # None: 10% of all steps
    weight_decay: float = 0.01
    seed: int = 0
    task: str = "singlelabel"
    mixup_lambda: float = 0.5
    mixup_prob: float = 1.0
    augmentation: str = "none"
    specmask: SpecMaskConfig | None = None
    specaug_max_t: int = 15
    specaug_max_f: int = 5
    specaug_n_t: int = 2
    specaug_n_f: int = 2
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.task not in ("singlelabel", "multilabel"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.augmentation not in ("none", "specaugment", "specmask"):
            raise ValueError(f"unknown augmentation {self.augmentation!r}")
        if not 0.0 <= self.mixup_lambda <= 1.0:
            raise ValueError("mixup_lambda must lie in [0, 1]")

    def total_steps(self, n_train: int) -> int:
        return self.epochs * math.ceil(n_train / self.batch_size)

    def warmup(self, total: int) -> int:
        w = self.warmup_steps if self.warmup_steps is not None else total // 10
        if w >= total:
            raise ValueError(f"warmup_steps={w} must be < total steps {total}")
        return w


@dataclass
class MetricsReport:
    loss: float
    mAP: float | None = None
    accuracy: float | None = None
    per_class_ap: list | None = None

    @property
    def score(self) -> float:
        return self.mAP if self.mAP is not None else self.accuracy


# --------------------------------------------------------------------------
# data-level operations


def mixup(w1: Waveform, w2: Waveform, y1, y2, lam: float = 0.5):
    if w1.sample_rate != w2.sample_rate:
        raise ValueError(f"sample-rate mismatch: {w1.sample_rate} vs {w2.sample_rate}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    n = min(len(w1), len(w2))
    x = lam * w1.samples[:n] + (1.0 - lam) * w2.samples[:n]
    y = lam * np.asarray(y1, dtype=np.float64) + (1.0 - lam) * np.asarray(y2, dtype=np.float64)
    return Waveform(x, w1.sample_rate), y


# --------------------------------------------------------------------------
# losses; each returns (mean loss, gradient w.r.t. logits)


def bce_loss(logits, targets) -> float:
    return bce_with_grad(logits, targets)[0]


def bce_with_grad(logits, targets):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {y.shape}")
    # softplus(z) - y*z, evaluated without overflow
    loss = np.maximum(z, 0) - y * z + np.log1p(np.exp(-np.abs(z)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return float(loss.mean()), (sig - y) / z.size


def ce_loss(logits, labels) -> float:
    return ce_with_grad(logits, labels)[0]


def ce_with_grad(logits, labels):
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    B, C = z.shape
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= C:
        raise IndexError(f"class index out of range for {C} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(B), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamWState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamWState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: dict, grads: dict, state: AdamWState, lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
    """In-place decoupled-weight-decay Adam update; returns (params, state)."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if lr == 0.0:
            continue
        if weight_decay:
            p -= (lr * weight_decay) * p
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype)
    return params, state


def lr_at(step: int, peak: float, warmup: int, total: int) -> float:
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    if step < warmup:
        return peak * step / warmup
    if total == warmup:
        return peak
    return peak * 0.5 * (1.0 + math.cos(math.pi * (step - warmup) / (total - warmup)))


# --------------------------------------------------------------------------
# metrics


def average_precision(scores, targets) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets) > 0.5
    if not targets.any():
        raise ValueError("average precision is undefined without positives")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = targets[order]
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def mean_average_precision(scores, targets):
    """(mAP over classes with at least one positive, per-class AP with NaN elsewhere)."""
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    if scores.shape != targets.shape:
        raise ValueError(f"shape mismatch {scores.shape} vs {targets.shape}")
    ap = np.full(scores.shape[1], np.nan)
    for c in range(scores.shape[1]):
        if (targets[:, c] > 0.5).any():
            ap[c] = average_precision(scores[:, c], targets[:, c])
    if np.isnan(ap).all():
        raise ValueError("mAP is undefined: no class has a positive example")
    return float(np.nanmean(ap)), ap


# --------------------------------------------------------------------------
# feature pipeline


def features(w: Waveform, model: AudioClassifier, pad_value: float) -> MelSpectrogram:
    return pad_or_trim(log_mel(w, model.mel), model.n_frames, pad_value)


def prepare(model: AudioClassifier, dataset, fit_normalizer: bool):
    """Clean normalized spectrograms (n, F, T) for a dataset.

    When fitting, the corpus mean of the unpadded spectrograms is used as the
    pad value so that padded cells normalize to zero.
    """
    raw = [log_mel(w, model.mel) for w in dataset.waveforms]
    if fit_normalizer:
        model.normalizer = Normalizer.fit(raw)
    norm = model.normalizer
    pad = norm.mean if norm is not None else 0.0
    specs = [pad_or_trim(s, model.n_frames, pad) for s in raw]
    if norm is not None:
        specs = [norm(s) for s in specs]
    return np.stack([s.data for s in specs])


def augment(x: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    s = MelSpectrogram(x)
    if cfg.augmentation == "specmask":
        return apply_specmask(s, cfg.specmask, rng).spectrogram.data
    if cfg.augmentation == "specaugment":
        return apply_specaugment(s, cfg.specaug_max_t, cfg.specaug_max_f, cfg.specaug_n_t, cfg.specaug_n_f, rng).data
    return x


def _loss_fn(task):
    return bce_with_grad if task == "multilabel" else ce_with_grad


def evaluate(model: AudioClassifier, specs: np.ndarray, targets: np.ndarray, task: str,
             batch_size: int = 64) -> MetricsReport:
    logits = np.concatenate([
        model.forward(specs[i : i + batch_size])[0] for i in range(0, len(specs), batch_size)
    ]).astype(np.float64)
    if task == "multilabel":
        mAP, ap = mean_average_precision(logits, targets)
        return MetricsReport(bce_loss(logits, targets), mAP=mAP, per_class_ap=ap.tolist())
    labels = targets.argmax(1)
    acc = float((logits.argmax(1) == labels).mean())
    return MetricsReport(ce_loss(logits, labels), accuracy=acc)


# --------------------------------------------------------------------------
# training loop


def train(model: AudioClassifier, train_set, val_set, cfg: TrainConfig, out_dir=None):
    """Train ``model`` in place; returns (best checkpoint params, per-epoch history).

    With ``out_dir`` the best checkpoint (by validation metric) is written to
    ``out_dir/best`` and one JSON line per epoch to ``out_dir/metrics.jsonl``.
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training set is empty")
    task = cfg.task
    train_specs = prepare(model, train_set, fit_normalizer=True)
    val_specs = prepare(model, val_set, fit_normalizer=False) if val_set is not None and len(val_set) else None
    targets = train_set.targets.astype(np.float64)
    labels = targets.argmax(1)
    loss_fn = _loss_fn(task)
    pad = model.normalizer.mean

    n = len(train_set)
    total = cfg.total_steps(n)
    warmup = cfg.warmup(total)
    state = AdamWState.zeros_like(model.params)
    history, best_score, best = [], -np.inf, None
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.jsonl").write_text("")

    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch, 0x0D]).permutation(n)
        losses = []
        for b0 in range(0, n, cfg.batch_size):
            idx = order[b0 : b0 + cfg.batch_size]
            xs, ys = [], []
            for i in idx:
                rng = sample_rng(cfg.seed, int(i), epoch)
                x, y = train_specs[i], targets[i]
                if task == "multilabel" and cfg.mixup_prob > 0 and rng.random() < cfg.mixup_prob:
                    j = int(rng.integers(n))
                    w, y = mixup(train_set.waveforms[i], train_set.waveforms[j], targets[i], targets[j], cfg.mixup_lambda)
                    x = model.normalizer(features(w, model, pad)).data
                xs.append(augment(x, cfg, rng))
                ys.append(y)
            batch_targets = np.stack(ys) if task == "multilabel" else labels[idx]
            loss, _, grads = model.loss_and_grads(np.stack(xs), loss_fn, batch_targets)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, step {step}")
            adamw_step(model.params, grads, state, lr_at(step, cfg.peak_lr, warmup, total),
                       weight_decay=cfg.weight_decay)
            losses.append(loss)
            step += 1

        record = {"epoch": epoch, "train_loss": float(np.mean(losses)), "lr": lr_at(step, cfg.peak_lr, warmup, total)}
        if val_specs is not None:
            report = evaluate(model, val_specs, val_set.targets, task, cfg.eval_batch_size)
            record.update({f"val_{k}": v for k, v in asdict(report).items() if v is not None and k != "per_class_ap"})
            score = report.score
        else:
            score = -record["train_loss"]
        log.info("epoch %d: %s", epoch, record)
        history.append(record)
        if out_dir is not None:
            with open(out_dir / "metrics.jsonl", "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        if score > best_score:
            best_score = score
            best = {k: v.copy() for k, v in model.params.items()}
            if out_dir is not None:
                model.save(out_dir / "best")
    return best, history
