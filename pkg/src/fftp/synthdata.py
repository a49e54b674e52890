"""Deterministic synthetic audio corpora and labeled WAV directory ingestion."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import Waveform, load_wav, resample, write_wav

KINDS = ("harmonic", "up_chirp", "down_chirp", "noise_burst", "am_tone")


@dataclass(frozen=True)
class EventClass:
    name: str
    kind: str
    f0: float = 440.0  # fundamental, chirp start, or AM carrier (Hz)
    f1: float = 2000.0  # chirp end or AM modulation rate (Hz)
    n_harmonics: int = 8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}; expected one of {KINDS}")


DEFAULT_CLASSES = (
    EventClass("harmonic", "harmonic", f0=300.0),
    EventClass("up_chirp", "up_chirp", f0=400.0, f1=3000.0),
    EventClass("down_chirp", "down_chirp", f0=3000.0, f1=400.0),
    EventClass("noise_burst", "noise_burst"),
    EventClass("am_tone", "am_tone", f0=1000.0, f1=8.0),
)


def harmonic_classes(f0s=(200.0, 250.0, 300.0, 400.0, 500.0, 600.0), n_harmonics: int = 8):
    """Harmonic stacks whose partials overlap between classes (e.g. 1200 Hz is a
    partial of 200, 300, 400 and 600 Hz), so any narrow frequency band is
    ambiguous and only the full stack identifies the class."""
    return tuple(EventClass(f"h{int(f)}", "harmonic", f0=f, n_harmonics=n_harmonics) for f in f0s)


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int
    duration_s: float = 1.0
    sample_rate: int = 16000
    classes: tuple = DEFAULT_CLASSES
    task: str = "singlelabel"
    events_per_clip: tuple = (1, 3)
    snr_db: tuple = (5.0, 20.0)
    event_fraction: tuple = (0.3, 0.8)
    seed: int = 0

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("need at least 2 classes")
        if self.duration_s <= 0 or self.n_samples < 0:
            raise ValueError("duration must be positive and n_samples non-negative")
        if self.task not in ("singlelabel", "multilabel"):
            raise ValueError(f"unknown task {self.task!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = [asdict(c) for c in self.classes]
        return d


@dataclass
class Dataset:
    waveforms: list
    targets: np.ndarray  # (n, C) in {0, 1}
    class_names: list
    task: str = "singlelabel"
    paths: list = field(default_factory=list)
    clipped: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.waveforms)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        """Class index per clip (argmax of the target row)."""
        return self.targets.argmax(axis=1)

    def subset(self, idx) -> "Dataset":
        idx = list(idx)
        return Dataset(
            [self.waveforms[i] for i in idx],
            self.targets[idx],
            self.class_names,
            self.task,
            [self.paths[i] for i in idx] if self.paths else [],
            [self.clipped[i] for i in idx] if self.clipped else [],
        )

    def split(self, val_fraction: float, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        order = np.random.default_rng([seed, 0x5B1]).permutation(len(self))
        n_val = int(round(len(self) * val_fraction))
        return self.subset(sorted(order[n_val:])), self.subset(sorted(order[:n_val]))


# --------------------------------------------------------------------------
# synthesis


def _fade(n: int, sr: int, ms: float = 10.0) -> np.ndarray:
    k = min(n // 2, int(sr * ms / 1000))
    env = np.ones(n)
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
        env[:k] = ramp
        env[n - k :] = ramp[::-1]
    return env


def synth_event(cls: EventClass, n: int, sr: int, rng: np.random.Generator) -> np.ndarray:
    """A unit-RMS event of n samples."""
    t = np.arange(n) / sr
    nyq = sr / 2
    if cls.kind == "harmonic":
        f0 = cls.f0 * (1.0 + rng.uniform(-0.01, 0.01))
        x = np.zeros(n)
        for k in range(1, cls.n_harmonics + 1):
            if k * f0 >= 0.95 * nyq:
                break
            x += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / np.sqrt(k)
    elif cls.kind in ("up_chirp", "down_chirp"):
        dur = n / sr
        f_start, f_end = cls.f0, cls.f1
        phase = 2 * np.pi * (f_start * t + (f_end - f_start) * t * t / (2 * dur))
        x = np.sin(phase + rng.uniform(0, 2 * np.pi))
    elif cls.kind == "noise_burst":
        x = rng.standard_normal(n)
    else:  # am_tone
        x = (1.0 + 0.8 * np.sin(2 * np.pi * cls.f1 * t)) * np.sin(2 * np.pi * cls.f0 * t)
    x = x * _fade(n, sr)
    rms = np.sqrt(np.mean(x * x))
    return x / rms if rms > 0 else x


def synth_clip(spec: SynthSpec, index: int):
    """Waveform, label indices and clip flag for one clip; depends only on (seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    C = len(spec.classes)
    if spec.task == "singlelabel":
        labels = [int(rng.integers(C))]
    else:
        lo, hi = spec.events_per_clip
        k = int(rng.integers(lo, min(hi, C) + 1))
        labels = sorted(int(c) for c in rng.choice(C, size=k, replace=False))

    signal = np.zeros(n)
    for c in labels:
        m = max(1, int(n * rng.uniform(*spec.event_fraction)))
        start = int(rng.integers(0, n - m + 1))
        signal[start : start + m] += synth_event(spec.classes[c], m, sr, rng)
    event_rms = np.sqrt(np.mean(signal**2))
    snr = rng.uniform(*spec.snr_db)
    noise = rng.standard_normal(n) * event_rms / 10 ** (snr / 20)
    x = signal + noise
    x *= 0.25 / max(np.max(np.abs(x)), 1e-12)
    clipped = bool(np.any(np.abs(x) > 1.0))
    return Waveform(np.clip(x, -1.0, 1.0), sr), labels, clipped


def generate(spec: SynthSpec) -> Dataset:
    C = len(spec.classes)
    waves, targets, clipped = [], np.zeros((spec.n_samples, C)), []
    for i in range(spec.n_samples):
        w, labels, clip = synth_clip(spec, i)
        waves.append(w)
        targets[i, labels] = 1.0
        clipped.append(clip)
    return Dataset(waves, targets, [c.name for c in spec.classes], spec.task, clipped=clipped)


# --------------------------------------------------------------------------
# on-disk corpora: WAV files + labels.csv (path,label1;label2) + manifest.json


def write_dataset(ds: Dataset, root, spec: SynthSpec | None = None) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows, checksums = [], {}
    for i, w in enumerate(ds.waveforms):
        name = f"clip_{i:05d}.wav"
        write_wav(root / name, w)
        checksums[name] = hashlib.sha256((root / name).read_bytes()).hexdigest()
        rows.append([name, ";".join(ds.class_names[c] for c in np.flatnonzero(ds.targets[i]))])
    with open(root / "labels.csv", "w", newline="") as f:
        csv.writer(f).writerows(rows)
    manifest = {
        "spec": spec.to_dict() if spec is not None else None,
        "task": ds.task,
        "class_names": list(ds.class_names),
        "n_samples": len(ds),
        "checksums": checksums,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return root


def load_labeled_dir(root, labels_csv=None, task: str | None = None, sample_rate: int = 16000) -> Dataset:
    """Read ``labels.csv`` rows of ``path,label1;label2``; duplicate paths union their labels.

    Classes are indexed by sorted label name. Relative paths resolve against
    ``root``. Audio at other rates is resampled to ``sample_rate``.
    """
    root = Path(root)
    labels_csv = Path(labels_csv) if labels_csv is not None else root / "labels.csv"
    merged: dict[str, set] = {}
    with open(labels_csv, newline="") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip():
                continue
            path = row[0].strip()
            names = {s.strip() for s in (row[1] if len(row) > 1 else "").split(";") if s.strip()}
            if not names:
                raise ValueError(f"{labels_csv}: row for {path!r} has no labels")
            merged.setdefault(path, set()).update(names)

    class_names = sorted(set().union(*merged.values())) if merged else []
    index = {name: i for i, name in enumerate(class_names)}
    waves, paths = [], []
    targets = np.zeros((len(merged), len(class_names)))
    for i, (path, names) in enumerate(merged.items()):
        full = Path(path) if Path(path).is_absolute() else root / path
        if not full.exists():
            raise FileNotFoundError(f"{labels_csv}: {full} does not exist")
        w = load_wav(full)
        waves.append(w if w.sample_rate == sample_rate else resample(w, sample_rate))
        paths.append(str(full))
        targets[i, [index[n] for n in names]] = 1.0
    if task is None:
        task = "multilabel" if (targets.sum(1) > 1).any() else "singlelabel"
    return Dataset(waves, targets, class_names, task, paths)
