import json

import numpy as np
import pytest

from fftp.audio import Waveform, log_mel, mel_centers, write_wav
from fftp.synthdata import (
    DEFAULT_CLASSES, EventClass, SynthSpec, generate, harmonic_classes, load_labeled_dir,
    synth_event, write_dataset,
)


def test_same_seed_same_bytes():
    spec = SynthSpec(n_samples=6, task="multilabel", seed=4)
    a, b = generate(spec), generate(spec)
    for x, y in zip(a.waveforms, b.waveforms):
        assert x.samples.tobytes() == y.samples.tobytes()
    np.testing.assert_array_equal(a.targets, b.targets)


def test_different_seed_differs():
    a = generate(SynthSpec(n_samples=2, seed=0))
    b = generate(SynthSpec(n_samples=2, seed=1))
    assert a.waveforms[0].samples.tobytes() != b.waveforms[0].samples.tobytes()


def test_clip_depends_only_on_index():
    small = generate(SynthSpec(n_samples=3, seed=2))
    large = generate(SynthSpec(n_samples=10, seed=2))
    for i in range(3):
        assert small.waveforms[i].samples.tobytes() == large.waveforms[i].samples.tobytes()


def test_singlelabel_has_exactly_one_label():
    ds = generate(SynthSpec(n_samples=50, task="singlelabel"))
    np.testing.assert_array_equal(ds.targets.sum(1), 1)


def test_multilabel_label_counts():
    ds = generate(SynthSpec(n_samples=50, task="multilabel", events_per_clip=(1, 3)))
    counts = ds.targets.sum(1)
    assert counts.min() >= 1 and counts.max() <= 3
    assert (counts > 1).any()


def test_amplitude_and_length():
    ds = generate(SynthSpec(n_samples=10, duration_s=0.75))
    for w in ds.waveforms:
        assert len(w) == 12000
        assert np.abs(w.samples).max() == pytest.approx(0.25)
    assert not any(ds.clipped)


def test_harmonic_partials_in_mel_energy():
    cls = EventClass("h", "harmonic", f0=500.0, n_harmonics=4)
    x = synth_event(cls, 16000, 16000, np.random.default_rng(0))
    spec = log_mel(Waveform(x, 16000))
    energy = spec.data.mean(axis=1)
    centers = mel_centers(128, 16000)
    on = [int(np.argmin(np.abs(centers - k * 500))) for k in (1, 2, 3, 4)]
    off = [int(np.argmin(np.abs(centers - (k + 0.5) * 500))) for k in (1, 2, 3)]
    assert min(energy[on]) > max(energy[off]) + 5.0


def test_event_is_unit_rms():
    for cls in DEFAULT_CLASSES:
        x = synth_event(cls, 4000, 16000, np.random.default_rng(1))
        assert np.sqrt(np.mean(x * x)) == pytest.approx(1.0)


def test_harmonic_classes_names():
    names = [c.name for c in harmonic_classes((200.0, 250.0))]
    assert names == ["h200", "h250"]


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(n_samples=1, classes=DEFAULT_CLASSES[:1])
    with pytest.raises(ValueError):
        SynthSpec(n_samples=1, task="regression")
    with pytest.raises(ValueError):
        EventClass("x", "whistle")


def test_split_is_disjoint_and_deterministic():
    ds = generate(SynthSpec(n_samples=20))
    tr, va = ds.split(0.25, seed=3)
    assert len(tr) == 15 and len(va) == 5
    tr2, va2 = ds.split(0.25, seed=3)
    np.testing.assert_array_equal(va.targets, va2.targets)
    seen = {w.samples.tobytes() for w in tr.waveforms}
    assert not seen & {w.samples.tobytes() for w in va.waveforms}


class TestOnDisk:
    def test_write_then_load(self, tmp_path):
        spec = SynthSpec(n_samples=5, task="multilabel", seed=9)
        ds = generate(spec)
        write_dataset(ds, tmp_path, spec)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["n_samples"] == 5 and len(manifest["checksums"]) == 5
        back = load_labeled_dir(tmp_path, task="multilabel")
        order = [ds.class_names.index(n) for n in back.class_names]
        np.testing.assert_array_equal(back.targets, ds.targets[:, order])
        for a, b in zip(ds.waveforms, back.waveforms):
            np.testing.assert_allclose(a.samples, b.samples, atol=1 / 32768)

    def _wav(self, path, rate=16000):
        write_wav(path, Waveform(np.zeros(rate // 10), rate))

    def test_single_and_multi_labels(self, tmp_path):
        self._wav(tmp_path / "x.wav")
        self._wav(tmp_path / "y.wav")
        (tmp_path / "labels.csv").write_text("x.wav,a\ny.wav,a;b\n")
        ds = load_labeled_dir(tmp_path)
        assert ds.class_names == ["a", "b"]
        np.testing.assert_array_equal(ds.targets, [[1, 0], [1, 1]])
        assert ds.task == "multilabel"

    def test_duplicate_rows_union(self, tmp_path):
        self._wav(tmp_path / "x.wav")
        (tmp_path / "labels.csv").write_text("x.wav,b\nx.wav,a\n")
        ds = load_labeled_dir(tmp_path)
        assert len(ds) == 1
        np.testing.assert_array_equal(ds.targets, [[1, 1]])

    def test_empty_csv(self, tmp_path):
        (tmp_path / "labels.csv").write_text("")
        ds = load_labeled_dir(tmp_path)
        assert len(ds) == 0 and ds.class_names == []

    def test_missing_file(self, tmp_path):
        (tmp_path / "labels.csv").write_text("ghost.wav,a\n")
        with pytest.raises(FileNotFoundError):
            load_labeled_dir(tmp_path)

    def test_row_without_labels(self, tmp_path):
        self._wav(tmp_path / "x.wav")
        (tmp_path / "labels.csv").write_text("x.wav,\n")
        with pytest.raises(ValueError):
            load_labeled_dir(tmp_path)

    def test_resamples_other_rates(self, tmp_path):
        self._wav(tmp_path / "x.wav", rate=8000)
        (tmp_path / "labels.csv").write_text("x.wav,a\n")
        ds = load_labeled_dir(tmp_path)
        assert ds.waveforms[0].sample_rate == 16000 and len(ds.waveforms[0]) == 1600
