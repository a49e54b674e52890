"""Spectrogram classifier: patch embedding followed by the transformer encoder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .audio import MelConfig, Normalizer
from .encoder import EncoderConfig
from .patcher import EmbeddingWeights, PatchConfig, extract_patches, patch_count


@dataclass
class AudioClassifier:
    patch: PatchConfig
    encoder: EncoderConfig
    n_mels: int
    n_frames: int
    params: dict = field(default_factory=dict)
    normalizer: Normalizer | None = None
    class_names: list = field(default_factory=list)
    mel: MelConfig = MelConfig()

    @classmethod
    def create(cls, patch: PatchConfig, encoder: EncoderConfig, n_mels: int, n_frames: int,
               seed: int = 0, dtype=np.float32, **kw) -> "AudioClassifier":
        n_f, n_t = patch_count(patch, n_mels, n_frames)
        if n_f * n_t + 1 != encoder.max_tokens:
            # size the positional table to the geometry
            encoder = EncoderConfig(**{**encoder.to_dict(), "max_tokens": n_f * n_t + 1})
        rng = np.random.default_rng([seed, 0xE5C])
        emb = EmbeddingWeights.init(patch, encoder.dim, rng, dtype)
        params = {"embed.W": emb.W_c, "embed.b": emb.bias}
        params.update(enc.init_params(encoder, rng, dtype))
        return cls(patch, encoder, n_mels, n_frames, params, **kw)

    @property
    def grid(self) -> tuple[int, int]:
        return patch_count(self.patch, self.n_mels, self.n_frames)

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def _tokens(self, specs):
        patches = extract_patches(specs, self.patch)
        return patches, patches @ self.params["embed.W"].T + self.params["embed.b"]

    def forward(self, specs, capture_attention: bool = False):
        """Logits for a (B, F, T) batch of normalized spectrograms."""
        specs = np.asarray(specs, dtype=self.params["embed.W"].dtype)
        _, tokens = self._tokens(specs)
        return enc.forward(tokens, self.params, self.encoder, capture_attention)

    def loss_and_grads(self, specs, loss_fn, targets):
        specs = np.asarray(specs, dtype=self.params["embed.W"].dtype)
        patches, tokens = self._tokens(specs)
        logits, cache = enc.forward_train(tokens, self.params, self.encoder)
        loss, dlogits = loss_fn(logits, targets)
        grads, dtokens = enc.backward(cache, self.params, dlogits.astype(logits.dtype))
        grads["embed.W"] = dtokens.reshape(-1, dtokens.shape[-1]).T @ patches.reshape(-1, patches.shape[-1])
        grads["embed.b"] = dtokens.sum((0, 1))
        return loss, logits, {k: grads[k] for k in self.params}

    def meta(self) -> dict:
        return {
            "patch": self.patch.to_dict(),
            "encoder": self.encoder.to_dict(),
            "n_mels": self.n_mels,
            "n_frames": self.n_frames,
            "mel": {k: getattr(self.mel, k) for k in MelConfig.__dataclass_fields__},
            "normalizer": None if self.normalizer is None else [self.normalizer.mean, self.normalizer.std],
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_meta(cls, meta: dict, params: dict) -> "AudioClassifier":
        norm = meta.get("normalizer")
        return cls(
            PatchConfig(**meta["patch"]),
            EncoderConfig(**meta["encoder"]),
            meta["n_mels"],
            meta["n_frames"],
            params,
            None if norm is None else Normalizer(*norm),
            meta.get("class_names", []),
            MelConfig(**meta.get("mel", {})),
        )

    def save(self, path) -> None:
        enc.save_checkpoint(path, self.params, self.meta())

    @classmethod
    def load(cls, path) -> "AudioClassifier":
        params, meta = enc.load_checkpoint(path)
        return cls.from_meta(meta, params)
