"""Pre-norm transformer encoder with hand-written backward pass.

Parameters live in a flat, ordered ``dict[str, ndarray]`` so that optimizers
and checkpoints can treat them uniformly. Affine maps are stored as
``(in, out)`` matrices and applied as ``x @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .patcher import PatchConfig, TokenSequence

LN_EPS = 1e-6
_GELU_C = float(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True)
class EncoderConfig:
    depth: int = 4
    dim: int = 128
    heads: int = 4
    mlp_ratio: float = 4.0
    n_classes: int = 10
    max_tokens: int = 1024

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.n_classes < 1 or self.max_tokens < 1:
            raise ValueError("n_classes and max_tokens must be >= 1")

    @property
    def hidden(self) -> int:
        return int(round(self.dim * self.mlp_ratio))

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    D, Hd, C = cfg.dim, cfg.hidden, cfg.n_classes
    shapes: dict[str, tuple[int, ...]] = {"cls": (D,), "pos": (cfg.max_tokens, D)}
    for l in range(cfg.depth):
        p = f"blocks.{l}."
        shapes.update({
            p + "ln1.g": (D,), p + "ln1.b": (D,),
            p + "qkv.W": (D, 3 * D), p + "qkv.b": (3 * D,),
            p + "proj.W": (D, D), p + "proj.b": (D,),
            p + "ln2.g": (D,), p + "ln2.b": (D,),
            p + "fc1.W": (D, Hd), p + "fc1.b": (Hd,),
            p + "fc2.W": (Hd, D), p + "fc2.b": (D,),
        })
    shapes.update({"norm.g": (D,), "norm.b": (D,), "head.W": (D, C), "head.b": (C,)})
    return shapes


def init_params(cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            arr = np.ones(shape)
        elif name.endswith(".b"):
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, 0.02, size=shape)
        params[name] = arr.astype(dtype)
    return params


@dataclass
class AttentionTrace:
    """Per-layer head-averaged attention, each (B, N', N') with rows = queries."""

    layers: list


# --------------------------------------------------------------------------
# primitives


def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _ln_bwd(dy, cache):
    xhat, rstd, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axes)
    db = dy.sum(axes)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def gelu(u):
    return 0.5 * u * (1.0 + np.tanh(_GELU_C * (u + 0.044715 * u**3)))


def _gelu_grad(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u**3))
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)


def softmax(s, axis=-1):
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _matmul_grad_W(x, dy):
    """Sum over all leading axes of x^T dy."""
    return x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])


# --------------------------------------------------------------------------
# forward / backward


def _as_tokens(ts) -> np.ndarray:
    if isinstance(ts, TokenSequence):
        if ts.has_class_token:
            raise ValueError("pass patch tokens; the encoder prepends its own class token")
        return ts.tokens
    tokens = np.asarray(ts)
    return tokens[None] if tokens.ndim == 2 else tokens


def _forward(tokens, params, cfg: EncoderConfig, keep_cache: bool, capture_attention: bool):
    B, N, D = tokens.shape
    n = N + 1
    if D != cfg.dim:
        raise ValueError(f"token dim {D} != encoder dim {cfg.dim}")
    if n > cfg.max_tokens:
        raise ValueError(f"{n} tokens exceed max_tokens={cfg.max_tokens}")
    H = cfg.heads
    dh = D // H
    scale = float(1.0 / np.sqrt(dh))

    cls = np.broadcast_to(params["cls"], (B, 1, D))
    x = np.concatenate([cls, tokens], axis=1) + params["pos"][:n]
    caches, trace = [], []
    for l in range(cfg.depth):
        p = f"blocks.{l}."
        h, ln1 = _ln_fwd(x, params[p + "ln1.g"], params[p + "ln1.b"])
        qkv = (h @ params[p + "qkv.W"] + params[p + "qkv.b"]).reshape(B, n, 3, H, dh)
        q, k, v = (qkv[:, :, i].transpose(0, 2, 1, 3) for i in range(3))
        att = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        o = (att @ v).transpose(0, 2, 1, 3).reshape(B, n, D)
        x = x + o @ params[p + "proj.W"] + params[p + "proj.b"]

        h2, ln2 = _ln_fwd(x, params[p + "ln2.g"], params[p + "ln2.b"])
        u = h2 @ params[p + "fc1.W"] + params[p + "fc1.b"]
        gu = gelu(u)
        x = x + gu @ params[p + "fc2.W"] + params[p + "fc2.b"]

        if capture_attention:
            trace.append(att.mean(axis=1))
        if keep_cache:
            caches.append((h, ln1, q, k, v, att, o, h2, ln2, u, gu))

    xn, lnf = _ln_fwd(x, params["norm.g"], params["norm.b"])
    c = xn[:, 0]
    logits = c @ params["head.W"] + params["head.b"]
    cache = (cfg, tokens.shape, caches, lnf, c) if keep_cache else None
    return logits, (AttentionTrace(trace) if capture_attention else None), cache


def forward(ts, params, cfg: EncoderConfig, capture_attention: bool = False):
    """Logits (B, C) from patch tokens (B, N, D); optionally the attention trace."""
    logits, trace, _ = _forward(_as_tokens(ts), params, cfg, False, capture_attention)
    return logits, trace


def forward_train(ts, params, cfg: EncoderConfig):
    logits, _, cache = _forward(_as_tokens(ts), params, cfg, True, False)
    return logits, cache


def backward(cache, params, dlogits):
    """Gradients of every parameter plus the gradient w.r.t. the input tokens."""
    cfg, (B, N, D), caches, lnf, c = cache
    n = N + 1
    H = cfg.heads
    dh = D // H
    scale = float(1.0 / np.sqrt(dh))
    grads = {}

    grads["head.W"] = c.T @ dlogits
    grads["head.b"] = dlogits.sum(0)
    dxn = np.zeros((B, n, D), dtype=dlogits.dtype)
    dxn[:, 0] = dlogits @ params["head.W"].T
    dx, grads["norm.g"], grads["norm.b"] = _ln_bwd(dxn, lnf)

    for l in reversed(range(cfg.depth)):
        p = f"blocks.{l}."
        h, ln1, q, k, v, att, o, h2, ln2, u, gu = caches[l]

        # MLP branch
        grads[p + "fc2.W"] = _matmul_grad_W(gu, dx)
        grads[p + "fc2.b"] = dx.sum((0, 1))
        du = (dx @ params[p + "fc2.W"].T) * _gelu_grad(u)
        grads[p + "fc1.W"] = _matmul_grad_W(h2, du)
        grads[p + "fc1.b"] = du.sum((0, 1))
        dh2 = du @ params[p + "fc1.W"].T
        dres, grads[p + "ln2.g"], grads[p + "ln2.b"] = _ln_bwd(dh2, ln2)
        dx = dx + dres

        # attention branch
        grads[p + "proj.W"] = _matmul_grad_W(o, dx)
        grads[p + "proj.b"] = dx.sum((0, 1))
        do = (dx @ params[p + "proj.W"].T).reshape(B, n, H, dh).transpose(0, 2, 1, 3)
        datt = do @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ do
        ds = att * (datt - (datt * att).sum(-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dqkv = np.stack([dq, dk, dv], axis=2)  # (B, H, 3, n, dh)
        dqkv = dqkv.transpose(0, 3, 2, 1, 4).reshape(B, n, 3 * D)
        grads[p + "qkv.W"] = _matmul_grad_W(h, dqkv)
        grads[p + "qkv.b"] = dqkv.sum((0, 1))
        dhid = dqkv @ params[p + "qkv.W"].T
        dres, grads[p + "ln1.g"], grads[p + "ln1.b"] = _ln_bwd(dhid, ln1)
        dx = dx + dres

    grads["cls"] = dx[:, 0].sum(0)
    dpos = np.zeros_like(params["pos"])
    dpos[:n] = dx.sum(0)
    grads["pos"] = dpos
    dtokens = dx[:, 1:]
    return {name: grads[name] for name in params if name in grads}, dtokens


# --------------------------------------------------------------------------
# attention rollout


def attention_rollout(trace, residual_weight: float = 1.0) -> np.ndarray:
    """Product of row-normalized (A + I) over layers, last layer leftmost.

    Accepts an AttentionTrace or a list of (N', N') / (B, N', N') matrices.
    """
    layers = trace.layers if isinstance(trace, AttentionTrace) else list(trace)
    if not layers:
        raise ValueError("empty attention trace")
    rollout = None
    for a in layers:
        a = np.asarray(a, dtype=np.float64)
        a = a + residual_weight * np.eye(a.shape[-1])
        a = a / a.sum(-1, keepdims=True)
        rollout = a if rollout is None else a @ rollout
    return rollout


def rollout_heatmap(relevance, grid: tuple[int, int], patch: PatchConfig, F: int, T: int) -> np.ndarray:
    """Paint class-token relevance (length n_f*n_t + 1) back onto an F x T map.

    Overlapping patches average; cells no patch covers stay 0. The result is
    scaled so its maximum is 1.
    """
    relevance = np.asarray(relevance, dtype=np.float64)
    n_f, n_t = grid
    if relevance.shape != (n_f * n_t + 1,):
        raise ValueError(f"relevance of length {relevance.size} does not match grid {grid} plus class token")
    total = np.zeros((F, T))
    count = np.zeros((F, T))
    r = relevance[1:].reshape(n_f, n_t)
    for i in range(n_f):
        rows = slice(i * patch.stride_f, i * patch.stride_f + patch.patch_f)
        for j in range(n_t):
            cols = slice(j * patch.stride_t, j * patch.stride_t + patch.patch_t)
            total[rows, cols] += r[i, j]
            count[rows, cols] += 1
    heat = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    peak = heat.max()
    return heat / peak if peak > 0 else heat


# --------------------------------------------------------------------------
# checkpoints: <stem>.json manifest + <stem>.bin of float32 LE tensors


def save_checkpoint(path, params: dict, meta: dict) -> None:
    path = Path(path)
    tensors = [{"name": k, "shape": list(v.shape)} for k, v in params.items()]
    manifest = dict(meta, tensors=tensors, blob=path.with_suffix(".bin").name)
    blob = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in params.values())
    path.with_suffix(".bin").write_bytes(blob)
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    raw = (path.parent / manifest["blob"]).read_bytes()
    params, offset = {}, 0
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        params[t["name"]] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(t["shape"]).astype(np.float32)
        offset += 4 * count
    if offset != len(raw):
        raise ValueError(f"{path}: blob has {len(raw) - offset} trailing bytes")
    meta = {k: v for k, v in manifest.items() if k not in ("tensors", "blob")}
    return params, meta
