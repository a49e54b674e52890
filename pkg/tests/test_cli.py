import json
import re

import numpy as np
import pytest

from fftp.audio import MelSpectrogram, load_cache, save_cache
from fftp.cli import main
from fftp.encoder import load_checkpoint
from fftp.model import AudioClassifier
from fftp.synthdata import load_labeled_dir
from fftp.trainer import evaluate, prepare

SMALL = [
    "--set", "frontend.n_mels=32", "--set", "frontend.n_frames=50",
    "--set", "patch.patch_f=32", "--set", "patch.stride_f=32",
    "--set", "model.depth=1", "--set", "model.dim=16", "--set", "model.heads=2",
    "--batch-size", "4",
]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["synth-gen", "--n", "12", "--duration", "0.5", "--seed", "3", "--out", str(root)]) == 0
    return root


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_tokenize_audioset_geometries(tmp_path, capsys, rng):
    path = tmp_path / "full.mels"
    save_cache(path, MelSpectrogram(rng.normal(size=(128, 1000))))
    code, out, _ = run(capsys, "tokenize", "--audioset-geometries", str(path))
    assert code == 0
    counts = [int(m) for m in re.findall(r"patches=(\d+)", out)]
    assert counts == [96, 196, 248, 496, 991, 1188]


def test_melspec_caches(tmp_path, corpus, capsys):
    code, out, _ = run(capsys, "melspec", "--data", str(corpus), "--out", str(tmp_path), *SMALL)
    assert code == 0
    caches = sorted(tmp_path.glob("*.mels"))
    assert len(caches) == 12
    s = load_cache(caches[0])
    assert (s.F, s.T) == (32, 50)


def test_mask_zero_budget_identity(tmp_path, capsys, rng):
    src = tmp_path / "x.mels"
    save_cache(src, MelSpectrogram(rng.normal(size=(128, 200))))
    out_dir = tmp_path / "out"
    code, _, _ = run(capsys, "mask", str(src), "--budget", "0", "--out", str(out_dir))
    assert code == 0
    assert (out_dir / "x.masked.mels").read_bytes() == src.read_bytes()
    assert (out_dir / "x.events.csv").read_text().strip() == "x,y,h,w,kind"


def test_mask_writes_previews(tmp_path, capsys, rng):
    src = tmp_path / "x.mels"
    save_cache(src, MelSpectrogram(rng.normal(size=(128, 200))))
    code, _, _ = run(capsys, "mask", str(src), "--budget", "2000", "--out", str(tmp_path / "o"))
    assert code == 0
    masked = load_cache(tmp_path / "o" / "x.masked.mels")
    assert (masked.data != load_cache(src).data).sum() > 0
    assert (tmp_path / "o" / "x.masked.pgm").read_bytes().startswith(b"P5")


def test_zero_lr_then_eval_matches_untrained(tmp_path, corpus, capsys):
    out_dir = tmp_path / "run"
    code, _, err = run(capsys, "train", "--data", str(corpus), "--lr", "0", "--epochs", "1",
                       "--out", str(out_dir), *SMALL)
    assert code == 0, err
    code, out, err = run(capsys, "eval", "--checkpoint", str(out_dir / "best"), "--data", str(corpus),
                         "--out", str(out_dir), *SMALL)
    assert code == 0, err
    result = json.loads(out)

    trained = AudioClassifier.load(out_dir / "best")
    fresh = AudioClassifier.create(trained.patch, trained.encoder, 32, 50, seed=0,
                                   class_names=trained.class_names, mel=trained.mel)
    fresh.normalizer = trained.normalizer
    for k in fresh.params:
        assert fresh.params[k].tobytes() == trained.params[k].tobytes()
    ds = load_labeled_dir(corpus)
    baseline = evaluate(fresh, prepare(fresh, ds, fit_normalizer=False), ds.targets, ds.task)
    assert result["loss"] == pytest.approx(baseline.loss, abs=1e-6)
    assert result["accuracy"] == pytest.approx(baseline.accuracy, abs=1e-6)


def test_train_is_reproducible(tmp_path, corpus, capsys):
    for name in ("a", "b"):
        code, _, err = run(capsys, "train", "--data", str(corpus), "--epochs", "2", "--seed", "5",
                           "--out", str(tmp_path / name), *SMALL)
        assert code == 0, err
    for f in ("best.bin", "best.json", "metrics.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    params, meta = load_checkpoint(tmp_path / "a" / "best")
    assert meta["patch"]["patch_f"] == 32


def test_rollout_outputs(tmp_path, corpus, capsys):
    run_dir = tmp_path / "run"
    assert run(capsys, "train", "--data", str(corpus), "--epochs", "1", "--out", str(run_dir), *SMALL)[0] == 0
    wav = sorted(corpus.glob("*.wav"))[0]
    code, _, err = run(capsys, "rollout", "--checkpoint", str(run_dir / "best"), str(wav), "--out", str(tmp_path / "r"))
    assert code == 0, err
    heat = np.loadtxt(tmp_path / "r" / f"{wav.stem}.rollout.csv", delimiter=",")
    assert heat.shape == (32, 50)
    assert heat.max() == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(heat, np.tile(heat[0], (32, 1)))


def test_bench_table(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--out", str(tmp_path))
    assert code == 0
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    patches = [int(r.split(",")[3]) for r in rows[1:]]
    assert patches == [96, 196, 248, 496, 991, 1188, 1212]


def test_bench_conventions_halve(tmp_path, capsys):
    run(capsys, "bench", "--out", str(tmp_path / "a"))
    run(capsys, "bench", "--convention", "mac1", "--out", str(tmp_path / "b"))
    a = [float(r.split(",")[5]) for r in (tmp_path / "a" / "bench.csv").read_text().splitlines()[1:]]
    b = [float(r.split(",")[5]) for r in (tmp_path / "b" / "bench.csv").read_text().splitlines()[1:]]
    np.testing.assert_allclose(a, 2 * np.array(b), rtol=1e-3)


@pytest.mark.parametrize("argv,key", [
    (["tokenize", "x.mels", "--set", "nosuch.key=1"], "nosuch"),
    (["tokenize", "x.mels", "--set", "patch.patch_f=256"], "patch.patch_f"),
    (["tokenize", "x.mels", "--set", "model.heads=3"], "model.heads"),
    (["train"], "paths.data"),
    (["train", "--data", "/does/not/exist"], "paths.data"),
    (["mask", "x.mels", "--mask-type", "specmask", "--set", "mask.budget_area=-1"], "mask.budget_area"),
])
def test_config_errors_exit_2(capsys, argv, key):
    code, _, err = run(capsys, *argv)
    assert code == 2
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith(f"fftp: error: config: {key}")


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "bench", "--config", str(tmp_path / "none.json"))
    assert code == 2 and "config:" in err


def test_config_file_values_used(capsys, tmp_path, rng):
    path = tmp_path / "x.mels"
    save_cache(path, MelSpectrogram(rng.normal(size=(64, 100))))
    (tmp_path / "run.json").write_text(json.dumps({"frontend": {"n_mels": 64}, "patch": {"patch_f": 64, "stride_f": 64, "patch_t": 10, "stride_t": 5}}))
    code, out, _ = run(capsys, "tokenize", str(path), "--config", str(tmp_path / "run.json"))
    assert code == 0 and "patches=19" in out


def test_runtime_error_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.mels"
    bad.write_bytes(b"nope")
    code, _, err = run(capsys, "tokenize", str(bad))
    assert code == 1
    assert err.startswith("fftp: error: runtime:")
