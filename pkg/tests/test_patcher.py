import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fftp.patcher import (
    AUDIOSET_FFTP, EmbeddingWeights, GeometryError, PatchConfig, TokenSequence, embed,
    extract_patches, patch_count, prepend_class_token, tokenize,
)
from oracles import count_windows_brute, strided_conv


@pytest.mark.parametrize("patch_t,stride_t,expected", [(50, 10, 96), (25, 5, 196), (10, 4, 248), (10, 2, 496), (10, 1, 991)])
def test_audioset_fftp_counts(patch_t, stride_t, expected):
    assert patch_count(PatchConfig.fftp(128, patch_t, stride_t), 128, 1000) == (1, expected)


def test_square_count_matches_brute_force():
    assert count_windows_brute(128, 1000, 16, 16, 10, 10) == (12, 99)
    assert patch_count(PatchConfig.square(16, 10), 128, 1000) == (12, 99)
    assert patch_count(PatchConfig.square(16, 10), 128, 1024) == (12, 101)


def test_geometry_errors():
    with pytest.raises(GeometryError):
        patch_count(PatchConfig.square(16, 10), 8, 100)
    with pytest.raises(GeometryError):
        patch_count(PatchConfig(64, 4, 64, 4, "fftp"), 128, 100)


@settings(max_examples=500)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(1, 64))
def test_patch_count_brute_force(F, T, pf, pt, sf, st_):
    assume(pf <= F and pt <= T)
    cfg = PatchConfig(pf, pt, sf, st_, "square")
    assert patch_count(cfg, F, T) == count_windows_brute(F, T, pf, pt, sf, st_)


@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 64), st.integers(1, 64))
def test_fftp_single_row(F, T, pt, st_):
    assume(pt <= T)
    assert patch_count(PatchConfig.fftp(F, pt, st_), F, T)[0] == 1


@given(st.integers(1, 200), st.integers(1, 50), st.integers(1, 49))
def test_smaller_stride_never_fewer_tokens(T, pt, st_):
    assume(pt <= T)
    a = patch_count(PatchConfig.fftp(8, pt, st_ + 1), 8, T)[1]
    b = patch_count(PatchConfig.fftp(8, pt, st_), 8, T)[1]
    assert b >= a


class TestExtract:
    def test_hand_enumerated(self):
        x = np.array([[1, 2, 3, 4], [5, 6, 7, 8]], dtype=float)
        p = extract_patches(x, PatchConfig.fftp(2, 2, 1))
        np.testing.assert_array_equal(p, [[1, 2, 5, 6], [2, 3, 6, 7], [3, 4, 7, 8]])

    def test_single_window(self, rng):
        x = rng.normal(size=(5, 7))
        p = extract_patches(x, PatchConfig(5, 7, 3, 2, "square"))
        np.testing.assert_array_equal(p, x.reshape(1, -1))

    def test_tiling_reconstructs(self, rng):
        x = rng.normal(size=(6, 12))
        p = extract_patches(x, PatchConfig.fftp(6, 3, 3))
        rebuilt = np.concatenate([row.reshape(6, 3) for row in p], axis=1)
        np.testing.assert_array_equal(rebuilt, x)

    def test_time_fastest_ordering(self, rng):
        x = rng.normal(size=(20, 30))
        cfg = PatchConfig.square(10, 5)
        p = extract_patches(x, cfg)
        n_f, n_t = patch_count(cfg, 20, 30)
        i, j = 1, 3
        np.testing.assert_array_equal(p[i * n_t + j], x[5:15, 15:25].ravel())

    def test_batch(self, rng):
        x = rng.normal(size=(3, 8, 20))
        cfg = PatchConfig.fftp(8, 4, 2)
        batched = extract_patches(x, cfg)
        for b in range(3):
            np.testing.assert_array_equal(batched[b], extract_patches(x[b], cfg))


class TestEmbed:
    def test_zero_kernel(self, rng):
        p = rng.normal(size=(5, 12))
        b = np.array([1.0, -2.0, 3.0])
        ts = embed(p, EmbeddingWeights(np.zeros((3, 12)), b))
        np.testing.assert_array_equal(ts.tokens[0], np.tile(b, (5, 1)))

    def test_summing_kernel(self, rng):
        p = rng.normal(size=(5, 12))
        ts = embed(p, EmbeddingWeights(np.ones((1, 12)), np.zeros(1)))
        np.testing.assert_allclose(ts.tokens[0, :, 0], p.sum(axis=1))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            embed(rng.normal(size=(5, 12)), EmbeddingWeights(np.ones((2, 10)), np.zeros(2)))

    @pytest.mark.parametrize("cfg", [AUDIOSET_FFTP[2], PatchConfig.square(16, 10)], ids=["fftp", "square"])
    def test_matches_conv_oracle_full_size(self, rng, cfg):
        x = rng.normal(size=(128, 1000))
        w = EmbeddingWeights.init(cfg, 4, rng, np.float64)
        ts = tokenize(x, cfg, w)
        ref = strided_conv(x, w.W_c.reshape(4, cfg.patch_f, cfg.patch_t), w.bias, (cfg.stride_f, cfg.stride_t))
        assert np.abs(ts.tokens[0] - ref).max() < 1e-5
        assert ts.patch_grid == patch_count(cfg, 128, 1000)


class TestClassToken:
    def test_zero_positions_keep_tokens(self, rng):
        ts = TokenSequence(rng.normal(size=(2, 5, 4)), (1, 5))
        out = prepend_class_token(ts, rng.normal(size=4), np.zeros((6, 4)))
        np.testing.assert_array_equal(out.tokens[:, 1:], ts.tokens)
        assert out.n_tokens == 6 and out.has_class_token

    def test_zero_class_token(self, rng):
        ts = TokenSequence(rng.normal(size=(1, 3, 4)), (1, 3))
        out = prepend_class_token(ts, np.zeros(4), np.zeros((4, 4)))
        np.testing.assert_array_equal(out.tokens[0, 0], 0.0)

    def test_positional_added_everywhere(self, rng):
        ts = TokenSequence(rng.normal(size=(1, 3, 4)), (1, 3))
        pos = rng.normal(size=(4, 4))
        cls = rng.normal(size=4)
        out = prepend_class_token(ts, cls, pos)
        np.testing.assert_allclose(out.tokens[0], np.vstack([cls, ts.tokens[0]]) + pos)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            prepend_class_token(TokenSequence(np.zeros((1, 0, 4)), (0, 0)), np.zeros(4), np.zeros((1, 4)))
        with pytest.raises(ValueError):
            prepend_class_token(TokenSequence(np.zeros((1, 3, 4)), (1, 3)), np.zeros(4), np.zeros((3, 4)))
