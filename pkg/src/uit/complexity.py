"""Static parameter, FLOP and peak-memory accounting for a UiT config.

FLOPs count multiply-accumulates (1 MAC = 1 FLOP) of the matrix products
only; norms, activations and softmax exponentials are left out. Peak memory
is weight bytes plus the largest set of simultaneously live float32
activations seen while walking the forward pass at batch 1, assuming every
intermediate is freed right after its last use and nothing is fused.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .model import UiTConfig, weight_shapes

BYTES_PER_VALUE = 4


@dataclass
class LayerRow:
    name: str
    params: int
    flops: int
    activation_bytes: int


@dataclass
class ComplexityReport:
    model: str
    rows: list = field(default_factory=list)
    params: int = 0
    flops: int = 0
    weight_bytes: int = 0
    peak_activation_bytes: int = 0

    @property
    def mflops(self) -> float:
        return self.flops / 1e6

    @property
    def m_pk_bytes(self) -> int:
        return self.weight_bytes + self.peak_activation_bytes

    def summary(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "flops": self.flops,
            "mflops": round(self.mflops, 3),
            "weight_bytes": self.weight_bytes,
            "peak_activation_bytes": self.peak_activation_bytes,
            "m_pk_bytes": self.m_pk_bytes,
            "m_pk_mb": round(self.m_pk_bytes / 1e6, 3),
        }

    def to_kv(self) -> str:
        lines = [f"{k}={v}" for k, v in self.summary().items()]
        for r in self.rows:
            lines.append(f"layer.{r.name}.params={r.params}")
            lines.append(f"layer.{r.name}.flops={r.flops}")
            lines.append(f"layer.{r.name}.activation_bytes={r.activation_bytes}")
        return "\n".join(lines)

    def to_text(self) -> str:
        head = f"{'layer':<12}{'params':>12}{'flops':>14}{'act bytes':>12}"
        lines = [f"model: {self.model}", head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.name:<12}{r.params:>12,}{r.flops:>14,}{r.activation_bytes:>12,}")
        lines.append("-" * len(head))
        lines.append(f"{'total':<12}{self.params:>12,}{self.flops:>14,}{self.peak_activation_bytes:>12,}")
        lines.append(f"params        {self.params / 1e6:.3f} M")
        lines.append(f"MFLOPs (1 s)  {self.mflops:.2f}")
        lines.append(f"weights       {self.weight_bytes / 1e6:.3f} MB")
        lines.append(f"activations   {self.peak_activation_bytes / 1e6:.3f} MB (peak)")
        lines.append(f"M_pk          {self.m_pk_bytes / 1e6:.3f} MB")
        return "\n".join(lines)


def _row_of(name: str) -> str:
    if name.startswith("blocks."):
        return "block." + name.split(".")[1]
    return {"stem": "stem", "pos": "pos_embed", "norm": "final_norm", "head": "head"}[name.split(".")[0]]


def _param_rows(cfg: UiTConfig) -> dict:
    rows = {}
    for name, shape in weight_shapes(cfg).items():
        n = 1
        for s in shape:
            n *= s
        key = _row_of(name)
        rows[key] = rows.get(key, 0) + n
    return rows


def count_params(cfg: UiTConfig) -> int:
    return sum(_param_rows(cfg).values())


def _block_flops(cfg: UiTConfig) -> int:
    n, d, a, m = cfg.n_tokens, cfg.dim, cfg.attn_dim, cfg.mlp_dim
    return 3 * n * d * a + 2 * n * n * a + n * a * d + 2 * n * d * m


def _flop_rows(cfg: UiTConfig) -> dict:
    rows = {"stem": cfg.n_tokens * cfg.patch_size * cfg.dim, "pos_embed": 0}
    for i in range(cfg.layers):
        rows[f"block.{i}"] = _block_flops(cfg)
    rows["final_norm"] = 0
    rows["head"] = cfg.dim * cfg.n_labels
    return rows


def count_flops(cfg: UiTConfig, seconds: int = 1) -> int:
    """FLOPs for ``seconds`` of audio evaluated as independent 1 s chunks."""
    if seconds <= 0 or int(seconds) != seconds:
        raise ValueError(f"duration must be a positive whole number of seconds, got {seconds}")
    return int(seconds) * sum(_flop_rows(cfg).values())


def _forward_graph(cfg: UiTConfig):
    """(row, inputs, output, n_values) for every op of a batch-1 forward pass."""
    n, d, a, m, h = cfg.n_tokens, cfg.dim, cfg.attn_dim, cfg.mlp_dim, cfg.heads
    g = [
        ("stem", ("input",), "tokens", n * cfg.patch_size),
        ("stem", ("tokens",), "stem_out", n * d),
        ("pos_embed", (), "pos", n * d),
        ("pos_embed", ("stem_out", "pos"), "x0", n * d),
    ]
    x = "x0"
    for i in range(cfg.layers):
        r, p = f"block.{i}", f"b{i}."
        g += [
            (r, (x,), p + "h", n * d),
            (r, (p + "h",), p + "q", n * a),
            (r, (p + "h",), p + "k", n * a),
            (r, (p + "h",), p + "v", n * a),
            (r, (p + "q", p + "k"), p + "s", h * n * n),
            (r, (p + "s",), p + "a", h * n * n),
            (r, (p + "a", p + "v"), p + "o", n * a),
            (r, (p + "o",), p + "proj", n * d),
            (r, (x, p + "proj"), p + "x1", n * d),
            (r, (p + "x1",), p + "h2", n * d),
            (r, (p + "h2",), p + "z", n * m),
            (r, (p + "z",), p + "act", n * m),
            (r, (p + "act",), p + "mlp", n * d),
            (r, (p + "x1", p + "mlp"), p + "x2", n * d),
        ]
        x = p + "x2"
    g += [
        ("final_norm", (x,), "y", n * d),
        ("final_norm", ("y",), "pooled", d),
        ("head", ("pooled",), "logits", cfg.n_labels),
    ]
    return g


def _activation_rows(cfg: UiTConfig) -> dict:
    graph = _forward_graph(cfg)
    sizes = {"input": cfg.input_frames * cfg.n_mels}
    born = {"input": -1}
    last = {"input": -1}
    for step, (_, ins, out, size) in enumerate(graph):
        sizes[out] = size
        born[out] = step
        last.setdefault(out, step)
        for t in ins:
            last[t] = step
    last["logits"] = len(graph)  # the result outlives the pass
    rows = {}
    for step, (row, _, _, _) in enumerate(graph):
        live = sum(sizes[t] for t in sizes if born[t] <= step <= last[t])
        rows[row] = max(rows.get(row, 0), live * BYTES_PER_VALUE)
    return rows


def peak_memory(cfg: UiTConfig) -> ComplexityReport:
    return analyze(cfg)


def analyze(cfg: UiTConfig, name: str | None = None) -> ComplexityReport:
    params, flops, acts = _param_rows(cfg), _flop_rows(cfg), _activation_rows(cfg)
    rows = [LayerRow(k, params.get(k, 0), flops[k], acts.get(k, 0)) for k in flops]
    total_params = sum(r.params for r in rows)
    return ComplexityReport(
        model=name or f"L{cfg.layers}-D{cfg.dim}-{cfg.attention}-{cfg.activation}",
        rows=rows,
        params=total_params,
        flops=sum(r.flops for r in rows),
        weight_bytes=BYTES_PER_VALUE * total_params,
        peak_activation_bytes=max(r.activation_bytes for r in rows),
    )
