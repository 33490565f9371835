"""UiT transformer: patchify stem, factorized position embeddings,
pre-norm bottleneck-attention blocks, mean pooling and a multilabel head.

Everything here is functional: weights live in a name -> array mapping, and
``forward`` / ``backward`` are plain functions over (tokens, weights, config).
Token tensors may be ``[N, P]`` or batched ``[B, N, P]``.
"""
from __future__ import annotations

import dataclasses
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .labels import DEFAULT_LABELS, LabelSpace


@dataclass(frozen=True)
class UiTConfig:
    layers: int
    dim: int
    bottleneck: int
    heads: int = 2
    mlp_dim: int = 384
    patch_t: int = 16
    patch_f: int = 16
    n_mels: int = 64
    input_frames: int = 96
    activation: str = "relu"
    attention: str = "bottleneck"
    labels: LabelSpace = field(default=DEFAULT_LABELS, repr=False)

    def __post_init__(self):
        if self.activation not in ops.ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ops.ACTIVATIONS)}, got {self.activation!r}")
        if self.attention not in ("bottleneck", "standard"):
            raise ValueError(f"attention must be 'bottleneck' or 'standard', got {self.attention!r}")
        if self.layers < 0 or min(self.dim, self.bottleneck, self.heads, self.mlp_dim) < 1:
            raise ValueError("layers must be >= 0 and all widths >= 1")
        if self.attn_dim % self.heads:
            raise ValueError(f"attention width {self.attn_dim} not divisible by {self.heads} heads")
        if self.input_frames % self.patch_t or self.n_mels % self.patch_f:
            raise ValueError(
                f"{self.input_frames}x{self.n_mels} input does not tile into "
                f"{self.patch_t}x{self.patch_f} patches"
            )

    @property
    def attn_dim(self) -> int:
        """Width of Q/K/V: ``bottleneck`` for BN-A, ``dim`` for standard attention."""
        return self.dim if self.attention == "standard" else self.bottleneck

    @property
    def head_dim(self) -> int:
        return self.attn_dim // self.heads

    @property
    def n_time(self) -> int:
        return self.input_frames // self.patch_t

    @property
    def n_freq(self) -> int:
        return self.n_mels // self.patch_f

    @property
    def n_tokens(self) -> int:
        return self.n_time * self.n_freq

    @property
    def patch_size(self) -> int:
        return self.patch_t * self.patch_f

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def replace(self, **changes) -> "UiTConfig":
        return dataclasses.replace(self, **changes)


PRESETS = {
    "uit-xs": dict(layers=12, dim=128, bottleneck=32, heads=2, mlp_dim=384),
    "uit-2xs": dict(layers=6, dim=128, bottleneck=32, heads=2, mlp_dim=384),
    "uit-3xs": dict(layers=4, dim=128, bottleneck=32, heads=2, mlp_dim=384),
}


def preset(name: str, **overrides) -> UiTConfig:
    """Preset architecture by name (``uit-xs``, ``uit-2xs``, ``uit-3xs``)."""
    try:
        base = PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(PRESETS)}") from None
    return UiTConfig(**{**base, **overrides})


# weights ---------------------------------------------------------------

NO_DECAY_SUFFIXES = (".bias", ".gamma", ".beta")
EMBEDDING_PREFIX = "pos."


def weight_shapes(cfg: UiTConfig) -> dict:
    """Ordered catalog of every weight tensor name and its shape."""
    d, a, m = cfg.dim, cfg.attn_dim, cfg.mlp_dim
    shapes = {
        "stem.weight": (cfg.patch_size, d),
        "stem.bias": (d,),
        "pos.time": (cfg.n_time, d),
        "pos.freq": (cfg.n_freq, d),
    }
    for i in range(cfg.layers):
        p = f"blocks.{i}."
        shapes.update({
            p + "ln1.gamma": (d,), p + "ln1.beta": (d,),
            p + "attn.q.weight": (d, a), p + "attn.q.bias": (a,),
            p + "attn.k.weight": (d, a), p + "attn.k.bias": (a,),
            p + "attn.v.weight": (d, a), p + "attn.v.bias": (a,),
            p + "attn.out.weight": (a, d), p + "attn.out.bias": (d,),
            p + "ln2.gamma": (d,), p + "ln2.beta": (d,),
            p + "mlp.fc1.weight": (d, m), p + "mlp.fc1.bias": (m,),
            p + "mlp.fc2.weight": (m, d), p + "mlp.fc2.bias": (d,),
        })
    shapes.update({
        "norm.gamma": (d,), "norm.beta": (d,),
        "head.weight": (d, cfg.n_labels), "head.bias": (cfg.n_labels,),
    })
    return shapes


def validate_weights(w: Mapping, cfg: UiTConfig) -> None:
    shapes = weight_shapes(cfg)
    for name, shape in shapes.items():
        if name not in w:
            raise ValueError(f"missing weight tensor {name!r} (expected shape {shape})")
        if tuple(w[name].shape) != shape:
            raise ValueError(f"weight tensor {name!r} has shape {tuple(w[name].shape)}, expected {shape}")
    extra = sorted(set(w) - set(shapes))
    if extra:
        raise ValueError(f"unexpected weight tensor(s) for this config: {', '.join(extra)}")


class WeightStore(Mapping):
    """Immutable name -> array collection validated against a config."""

    def __init__(self, tensors: Mapping, cfg: UiTConfig | None = None, dtype=np.float32):
        self._t = {}
        for k, v in tensors.items():
            arr = np.array(v, dtype=dtype, copy=True)
            arr.setflags(write=False)
            self._t[k] = arr
        if cfg is not None:
            validate_weights(self._t, cfg)

    def __getitem__(self, name):
        return self._t[name]

    def __iter__(self):
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    def __repr__(self):
        return f"WeightStore({len(self)} tensors, {self.n_params} params)"

    @property
    def n_params(self) -> int:
        return sum(int(v.size) for v in self._t.values())

    def to_dict(self, dtype=None) -> dict:
        return {k: np.array(v, dtype=dtype or v.dtype) for k, v in self._t.items()}


def is_decayed(name: str) -> bool:
    """Weight decay applies to projection matrices only."""
    return not (name.endswith(NO_DECAY_SUFFIXES) or name.startswith(EMBEDDING_PREFIX))


def _trunc_normal(rng, shape, std):
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def init_weights(cfg: UiTConfig, rng=None, std: float = 0.02, dtype=np.float32) -> dict:
    """Fresh training weights: truncated normal for matrices and embeddings,
    zero biases, unit/zero norm affine."""
    rng = np.random.default_rng(rng)
    w = {}
    for name, shape in weight_shapes(cfg).items():
        if name.endswith(".gamma"):
            w[name] = np.ones(shape, dtype)
        elif name.endswith((".bias", ".beta")):
            w[name] = np.zeros(shape, dtype)
        else:
            w[name] = _trunc_normal(rng, shape, std).astype(dtype)
    return w


def random_weights(cfg: UiTConfig, rng=None, scale: float = 0.5, dtype=np.float32) -> dict:
    """Dense random weights (all tensors non-trivial); used by tests and benchmarks."""
    rng = np.random.default_rng(rng)
    w = {}
    for name, shape in weight_shapes(cfg).items():
        fan_in = shape[0] if len(shape) == 2 else 1
        arr = rng.normal(0.0, scale / math.sqrt(fan_in), size=shape)
        if name.endswith(".gamma"):
            arr = 1.0 + 0.1 * arr
        w[name] = arr.astype(dtype)
    return w


def zero_weights(cfg: UiTConfig, dtype=np.float32) -> dict:
    return {
        name: (np.ones if name.endswith(".gamma") else np.zeros)(shape, dtype)
        for name, shape in weight_shapes(cfg).items()
    }


# forward / backward ----------------------------------------------------

def patchify(sg, cfg: UiTConfig) -> np.ndarray:
    """Tile the first ``input_frames`` frames into ``[N, P]`` tokens.

    Tokens are ordered time-major then frequency; each tile is flattened
    row-major (time within tile is the slow axis).
    """
    sg = np.asarray(sg)
    if sg.ndim != 2:
        raise ValueError(f"expected a [frames, mels] spectrogram, got shape {sg.shape}")
    n_frames, n_mels = sg.shape
    if n_mels != cfg.n_mels:
        raise ValueError(f"spectrogram has {n_mels} mel bins, model expects {cfg.n_mels}")
    if n_frames < cfg.input_frames:
        raise ValueError(f"spectrogram has {n_frames} frames; need at least {cfg.input_frames}")
    x = sg[: cfg.input_frames]
    x = x.reshape(cfg.n_time, cfg.patch_t, cfg.n_freq, cfg.patch_f).transpose(0, 2, 1, 3)
    return np.ascontiguousarray(x.reshape(cfg.n_tokens, cfg.patch_size))


def _split_heads(x, heads):
    *lead, n, a = x.shape
    return np.swapaxes(x.reshape(*lead, n, heads, a // heads), -2, -3)


def _merge_heads(x):
    x = np.swapaxes(x, -2, -3)
    *lead, n, h, dh = x.shape
    return x.reshape(*lead, n, h * dh)


def _linear(x, w, name):
    return ops.matmul(x, w[name + ".weight"]) + w[name + ".bias"]


def _attention_fused(h, w, p, cfg, cache):
    """Project once to the full attention width, then split into heads."""
    q = _split_heads(_linear(h, w, p + "attn.q"), cfg.heads)
    k = _split_heads(_linear(h, w, p + "attn.k"), cfg.heads)
    v = _split_heads(_linear(h, w, p + "attn.v"), cfg.heads)
    scale = 1.0 / math.sqrt(cfg.head_dim)
    a = ops.softmax_rows(ops.matmul(q, np.swapaxes(k, -1, -2)) * scale)
    o = _merge_heads(ops.matmul(a, v))
    if cache is not None:
        cache.update(q=q, k=k, v=v, a=a, o=o)
    return _linear(o, w, p + "attn.out")


def _attention_per_head(h, w, p, cfg):
    """Textbook multi-head attention: separate Q/K/V slices per head."""
    dh = cfg.head_dim
    scale = 1.0 / math.sqrt(dh)
    outs = []
    for j in range(cfg.heads):
        cols = slice(j * dh, (j + 1) * dh)
        q = ops.matmul(h, w[p + "attn.q.weight"][:, cols]) + w[p + "attn.q.bias"][cols]
        k = ops.matmul(h, w[p + "attn.k.weight"][:, cols]) + w[p + "attn.k.bias"][cols]
        v = ops.matmul(h, w[p + "attn.v.weight"][:, cols]) + w[p + "attn.v.bias"][cols]
        a = ops.softmax_rows(ops.matmul(q, np.swapaxes(k, -1, -2)) * scale)
        outs.append(ops.matmul(a, v))
    return _linear(np.concatenate(outs, axis=-1), w, p + "attn.out")


def _run(tokens, w, cfg, keep):
    act, _ = ops.ACTIVATIONS[cfg.activation]
    dtype = w["stem.weight"].dtype
    tokens = np.asarray(tokens, dtype=dtype)
    if tokens.shape[-2:] != (cfg.n_tokens, cfg.patch_size):
        raise ValueError(f"tokens have shape {tokens.shape}, expected [..., {cfg.n_tokens}, {cfg.patch_size}]")
    cache = {"tokens": tokens, "blocks": []} if keep else None

    pos = (w["pos.time"][:, None, :] + w["pos.freq"][None, :, :]).reshape(cfg.n_tokens, cfg.dim)
    x = _linear(tokens, w, "stem") + pos
    for i in range(cfg.layers):
        p = f"blocks.{i}."
        bc = {} if keep else None
        h, ln1 = ops.layer_norm(x, w[p + "ln1.gamma"], w[p + "ln1.beta"])
        if keep or cfg.attention == "bottleneck":
            x = x + _attention_fused(h, w, p, cfg, bc)
        else:
            x = x + _attention_per_head(h, w, p, cfg)
        h2, ln2 = ops.layer_norm(x, w[p + "ln2.gamma"], w[p + "ln2.beta"])
        z = _linear(h2, w, p + "mlp.fc1")
        r = act(z)
        x = x + _linear(r, w, p + "mlp.fc2")
        if keep:
            bc.update(h=h, ln1=ln1, h2=h2, ln2=ln2, z=z, r=r)
            cache["blocks"].append(bc)
    y, lnf = ops.layer_norm(x, w["norm.gamma"], w["norm.beta"])
    pooled = y.mean(axis=-2)
    logits = ops.matmul(pooled[..., None, :], w["head.weight"])[..., 0, :] + w["head.bias"]
    if keep:
        cache.update(lnf=lnf, pooled=pooled)
    return logits, cache


def forward(tokens, w: Mapping, cfg: UiTConfig, check: bool = True) -> np.ndarray:
    """Raw logits ``[n_labels]`` (or ``[B, n_labels]`` for batched tokens)."""
    if check:
        validate_weights(w, cfg)
    return _run(tokens, w, cfg, keep=False)[0]


def forward_with_cache(tokens, w: Mapping, cfg: UiTConfig):
    validate_weights(w, cfg)
    return _run(tokens, w, cfg, keep=True)


def backward(dlogits, cache, w: Mapping, cfg: UiTConfig) -> dict:
    """Gradients of every weight given the upstream gradient on the logits."""
    _, act_back = ops.ACTIVATIONS[cfg.activation]
    g = {}
    n = cfg.n_tokens
    scale = 1.0 / math.sqrt(cfg.head_dim)

    def lin_back(dy, x, name):
        dx, dw = ops.matmul_backward(dy, x, w[name + ".weight"])
        g[name + ".weight"] = dw
        g[name + ".bias"] = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        return dx

    pooled = cache["pooled"]
    g["head.weight"] = pooled.reshape(-1, cfg.dim).T @ dlogits.reshape(-1, cfg.n_labels)
    g["head.bias"] = dlogits.reshape(-1, cfg.n_labels).sum(axis=0)
    dpooled = dlogits @ w["head.weight"].T
    dy = np.repeat(dpooled[..., None, :], n, axis=-2) / n
    dx, g["norm.gamma"], g["norm.beta"] = ops.layer_norm_backward(dy, cache["lnf"])

    for i in reversed(range(cfg.layers)):
        p = f"blocks.{i}."
        bc = cache["blocks"][i]
        dr = lin_back(dx, bc["r"], p + "mlp.fc2")
        dz = act_back(dr, bc["z"])
        dh2 = lin_back(dz, bc["h2"], p + "mlp.fc1")
        dres, g[p + "ln2.gamma"], g[p + "ln2.beta"] = ops.layer_norm_backward(dh2, bc["ln2"])
        dx = dx + dres

        do = _split_heads(lin_back(dx, bc["o"], p + "attn.out"), cfg.heads)
        da, dv = ops.matmul_backward(do, bc["a"], bc["v"])
        ds = ops.softmax_rows_backward(da, bc["a"]) * scale
        dq, dkt = ops.matmul_backward(ds, bc["q"], np.swapaxes(bc["k"], -1, -2))
        dk = np.swapaxes(dkt, -1, -2)
        dh = (
            lin_back(_merge_heads(dq), bc["h"], p + "attn.q")
            + lin_back(_merge_heads(dk), bc["h"], p + "attn.k")
            + lin_back(_merge_heads(dv), bc["h"], p + "attn.v")
        )
        dres, g[p + "ln1.gamma"], g[p + "ln1.beta"] = ops.layer_norm_backward(dh, bc["ln1"])
        dx = dx + dres

    dpos = dx.reshape(-1, cfg.n_time, cfg.n_freq, cfg.dim).sum(axis=0)
    g["pos.time"] = dpos.sum(axis=1)
    g["pos.freq"] = dpos.sum(axis=0)
    lin_back(dx, cache["tokens"], "stem")
    return g


def loss_and_grads(tokens, targets, w: Mapping, cfg: UiTConfig):
    """Mean BCE of ``forward(tokens)`` against ``targets`` and its weight gradients."""
    logits, cache = forward_with_cache(tokens, w, cfg)
    targets = np.asarray(targets, dtype=logits.dtype)
    loss = ops.bce_with_logits(logits, targets)
    grads = backward(ops.bce_with_logits_backward(logits, targets), cache, w, cfg)
    return loss, grads


def score(logits) -> np.ndarray:
    """Per-label probabilities (independent sigmoids)."""
    return ops.sigmoid(np.asarray(logits))
