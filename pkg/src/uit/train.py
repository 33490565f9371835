"""Joint keyword-spotting + audio-tagging training at desk scale.

Batches are half keyword-spotting, half audio-tagging samples, each randomly
cropped to the target duration, augmented, converted to log-Mel features and
scored with BCE against the merged label space. Audio-tagging crops may take
their targets from a pseudo-strong-label (PSL) sidecar keyed by crop offset.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import model as M
from . import ops
from .dsp import SAMPLE_RATE, AugmentSpec, MelConfig, augment_waveform, log_mel, read_wav, spec_augment
from .labels import LabelSpace

log = logging.getLogger(__name__)

SOURCES = ("KWS", "AT")


@dataclass
class Sample:
    audio: np.ndarray  # 1-D waveform or [frames, mels] spectrogram
    targets: np.ndarray
    source: str
    clip_id: str | None = None
    offset: float = 0.0  # seconds into the original clip

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        self.targets = np.asarray(self.targets, dtype=np.float32)
        if np.any(self.targets < 0) or np.any(self.targets > 1):
            raise ValueError("targets must lie in [0, 1]")

    @property
    def is_spectrogram(self) -> bool:
        return np.ndim(self.audio) == 2


def check_kws_targets(sample: Sample, labels: LabelSpace) -> None:
    """KWS targets are one-hot on a keyword or on the Speech label."""
    allowed = set(labels.keyword_indices) | {labels.speech_index}
    active = np.flatnonzero(sample.targets > 0)
    if len(active) != 1 or int(active[0]) not in allowed:
        raise ValueError(f"KWS sample {sample.clip_id or ''} must have exactly one keyword or Speech target")


@dataclass
class OptimState:
    lr0: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_epochs: float = 20
    total_epochs: float = 800
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def lr_at(epoch: float, st: OptimState) -> float:
    """Linear warmup to ``lr0`` then cosine annealing to zero at ``total_epochs``."""
    if not 0 <= epoch <= st.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {st.total_epochs}]")
    if epoch < st.warmup_epochs:
        return st.lr0 * epoch / st.warmup_epochs
    span = st.total_epochs - st.warmup_epochs
    if span <= 0:
        return st.lr0
    return st.lr0 * 0.5 * (1.0 + math.cos(math.pi * (epoch - st.warmup_epochs) / span))


def adamw_step(weights: dict, grads: dict, st: OptimState, lr: float):
    """One decoupled-weight-decay Adam update.

    Returns ``(new_weights, st)``; the input weight arrays are not modified.
    Decay is skipped for biases, norm parameters and position embeddings.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")
    st.step += 1
    b1, b2 = st.betas
    c1 = 1.0 - b1 ** st.step
    c2 = 1.0 - b2 ** st.step
    out = {}
    for name, w in weights.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, weight has {w.shape}")
        m = st.m.get(name)
        if m is None:
            m = st.m[name] = np.zeros_like(w)
            st.v[name] = np.zeros_like(w)
        v = st.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        new = w * (1.0 - lr * st.weight_decay) if M.is_decayed(name) else w.copy()
        new -= lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
        out[name] = new.astype(w.dtype, copy=False)
    return out, st


# data ------------------------------------------------------------------

def crop_length(sample: Sample, seconds: float, mel: MelConfig = MelConfig()) -> int:
    n = int(round(seconds * SAMPLE_RATE))
    return mel.n_frames(n) if sample.is_spectrogram else n


def random_crop(sample: Sample, rng: np.random.Generator, seconds: float = 1.0,
                mel: MelConfig = MelConfig()) -> Sample:
    """Uniformly placed window of ``seconds``; short samples are zero-padded first.

    Spectrogram samples are cropped to the frame count a ``seconds`` long
    waveform would produce (97 for 1 s) and padded with the log floor.
    """
    n = crop_length(sample, seconds, mel)
    x = np.asarray(sample.audio, dtype=np.float32)
    if x.shape[0] < n:
        pad_value = math.log(mel.log_floor) if sample.is_spectrogram else 0.0
        pad = [(0, n - x.shape[0])] + [(0, 0)] * (x.ndim - 1)
        x = np.pad(x, pad, constant_values=pad_value)
    start = int(rng.integers(0, x.shape[0] - n + 1))
    unit = mel.hop_length / SAMPLE_RATE if sample.is_spectrogram else 1.0 / SAMPLE_RATE
    return replace(sample, audio=x[start:start + n].copy(), offset=sample.offset + start * unit)


class PslTable:
    """Soft audio-tagging targets per clip, one vector per crop region.

    Sidecar text format, one region per line::

        clip_id offset_seconds v_0 v_1 ... v_{C-1}
    """

    def __init__(self, regions=None):
        self._regions = {}
        for clip_id, offset, values in regions or ():
            self.add(clip_id, offset, values)

    def add(self, clip_id, offset, values):
        values = np.asarray(values, dtype=np.float32)
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError(f"PSL values for {clip_id}@{offset} outside [0, 1]")
        self._regions.setdefault(clip_id, []).append((float(offset), values))
        self._regions[clip_id].sort(key=lambda r: r[0])

    def __contains__(self, clip_id):
        return clip_id in self._regions

    def lookup(self, clip_id: str, offset: float) -> np.ndarray:
        """Targets of the last region starting at or before ``offset``."""
        regions = self._regions[clip_id]
        best = regions[0][1]
        for start, values in regions:
            if start <= offset + 1e-9:
                best = values
            else:
                break
        return best

    @classmethod
    def read(cls, path, n_labels: int) -> "PslTable":
        table = cls()
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != n_labels + 2:
                    raise ValueError(f"{path}:{lineno}: expected {n_labels + 2} fields, got {len(parts)}")
                table.add(parts[0], float(parts[1]), [float(v) for v in parts[2:]])
        return table


def read_manifest(path, labels: LabelSpace, psl: PslTable | None = None) -> list:
    """Load samples listed as ``wav_path source targets`` per line.

    ``targets`` is a comma-separated list of label indices, or ``psl`` to
    take soft targets from the PSL sidecar (clip id = WAV file stem).
    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'path source targets'")
            wav, source, spec = parts
            wav_path = Path(wav) if Path(wav).is_absolute() else path.parent / wav
            clip_id = wav_path.stem
            if spec == "psl":
                if psl is None or clip_id not in psl:
                    raise ValueError(f"{path}:{lineno}: no PSL entry for clip {clip_id!r}")
                targets = psl.lookup(clip_id, 0.0)
            else:
                targets = np.zeros(len(labels), np.float32)
                for tok in spec.split(","):
                    idx = int(tok)
                    if not 0 <= idx < len(labels):
                        raise ValueError(f"{path}:{lineno}: label index {idx} out of range")
                    targets[idx] = 1.0
            s = Sample(read_wav(wav_path), targets, source.upper(), clip_id)
            if s.source == "KWS":
                check_kws_targets(s, labels)
            samples.append(s)
    return samples


@dataclass
class Batch:
    features: np.ndarray  # [B, frames, mels]
    targets: np.ndarray  # [B, C]
    sources: list


def _draw(stream, rng):
    return stream[int(rng.integers(0, len(stream)))]


def featurize(sample: Sample, rng, augment: AugmentSpec | None, mel: MelConfig) -> np.ndarray:
    x = sample.audio
    if not sample.is_spectrogram:
        if augment is not None:
            x = augment_waveform(x, augment, rng)
        x = log_mel(x, mel)
    if augment is not None:
        x = spec_augment(x, augment, rng)
    return np.asarray(x, dtype=np.float32)


def make_batch(kws_stream, at_stream, batch_size: int, rng: np.random.Generator,
               augment: AugmentSpec | None = None, seconds: float = 1.0,
               mel: MelConfig = MelConfig(), psl: PslTable | None = None) -> Batch:
    """Draw ``batch_size / 2`` samples from each stream, crop, augment, shuffle."""
    if batch_size < 2 or batch_size % 2:
        raise ValueError(f"batch_size must be a positive even number, got {batch_size}")
    if not kws_stream or not at_stream:
        raise ValueError("both sample streams must be non-empty")
    half = batch_size // 2
    picked = [_draw(kws_stream, rng) for _ in range(half)] + [_draw(at_stream, rng) for _ in range(half)]
    picked = [picked[i] for i in rng.permutation(batch_size)]
    feats, targets = [], []
    for s in picked:
        c = random_crop(s, rng, seconds, mel)
        t = c.targets
        if c.source == "AT" and psl is not None and c.clip_id in psl:
            t = psl.lookup(c.clip_id, c.offset)
        feats.append(featurize(c, rng, augment, mel))
        targets.append(t)
    return Batch(np.stack(feats), np.stack(targets).astype(np.float32), [s.source for s in picked])


def tokens_for(features: np.ndarray, cfg: M.UiTConfig) -> np.ndarray:
    return np.stack([M.patchify(f, cfg) for f in features])


def train_step(weights: dict, st: OptimState, tokens, targets, cfg: M.UiTConfig, lr: float):
    loss, grads = M.loss_and_grads(tokens, targets, weights, cfg)
    if not math.isfinite(loss):
        raise FloatingPointError(f"loss became non-finite at step {st.step}")
    weights, st = adamw_step(weights, grads, st, lr)
    return loss, weights


# synthetic task ----------------------------------------------------------

TOY_TONES = (300.0, 900.0, 2200.0, 5000.0)


def toy_config(**overrides) -> M.UiTConfig:
    base = dict(layers=2, dim=32, bottleneck=8, heads=2, mlp_dim=96, labels=LabelSpace.small(2, 2))
    return M.UiTConfig(**{**base, **overrides})


def _tone_clip(freq, seconds, rng):
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    amp = rng.uniform(0.3, 0.6)
    x = amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    return (x + 0.01 * rng.standard_normal(t.size)).astype(np.float32)


def make_toy_streams(labels: LabelSpace, rng, per_class: int = 8, seconds: float = 1.5):
    """One pure tone per label: keyword tones form the KWS stream, event tones the AT stream.

    Each class occupies its own mel band, so a linear read-out of the
    pooled features separates them.
    """
    order = list(labels.keyword_indices) + list(labels.event_indices)
    if len(order) > len(TOY_TONES):
        raise ValueError(f"toy task supports at most {len(TOY_TONES)} labels")
    kws, at = [], []
    for idx, freq in zip(order, TOY_TONES):
        y = np.zeros(len(labels), np.float32)
        y[idx] = 1.0
        stream = kws if idx in labels.keyword_indices else at
        src = "KWS" if stream is kws else "AT"
        stream += [Sample(_tone_clip(freq, seconds, rng), y, src, f"{src}-{idx}-{k}") for k in range(per_class)]
    return kws, at


@dataclass
class ToyResult:
    losses: list  # probe-set BCE after each epoch
    train_losses: list  # mean minibatch BCE per epoch
    lrs: list
    weights: dict

    def log_lines(self):
        return [f"{e + 1} {l:.6f} {lr:.6g}" for e, (l, lr) in enumerate(zip(self.losses, self.lrs))]


def train_toy(cfg: M.UiTConfig | None = None, seed: int = 0, epochs: int = 20, steps_per_epoch: int = 10,
              batch_size: int = 16, lr0: float = 1e-2, warmup_epochs: float = 2,
              weight_decay: float = 0.01, augment: AugmentSpec | None = None,
              log_path=None) -> ToyResult:
    """Run the full crop -> augment -> forward -> BCE -> AdamW loop on tone data.

    The loss curve is measured on a fixed, un-augmented probe set after every
    epoch, so it depends on the weights only.
    """
    cfg = cfg or toy_config()
    rng = np.random.default_rng(seed)
    kws, at = make_toy_streams(cfg.labels, rng)
    probe = [s for s in kws + at]
    probe_x = tokens_for(np.stack([log_mel(s.audio[:SAMPLE_RATE]) for s in probe]), cfg)
    probe_y = np.stack([s.targets for s in probe])
    if augment is None:
        augment = AugmentSpec(specaug_time_width=10, specaug_freq_width=4, rng_seed=seed)

    weights = M.init_weights(cfg, rng)
    st = OptimState(lr0=lr0, weight_decay=weight_decay, warmup_epochs=warmup_epochs, total_epochs=epochs)
    losses, train_losses, lrs = [], [], []
    for epoch in range(epochs):
        batch_losses = []
        for k in range(steps_per_epoch):
            lr = lr_at(epoch + k / steps_per_epoch, st)
            b = make_batch(kws, at, batch_size, rng, augment)
            loss, weights = train_step(weights, st, tokens_for(b.features, cfg), b.targets, cfg, lr)
            batch_losses.append(loss)
        probe_loss = ops.bce_with_logits(M.forward(probe_x, weights, cfg), probe_y)
        if not math.isfinite(probe_loss):
            raise FloatingPointError(f"training diverged in epoch {epoch + 1}")
        losses.append(probe_loss)
        train_losses.append(float(np.mean(batch_losses)))
        lrs.append(lr_at(epoch + 1, st))
        log.info("epoch %d probe_loss %.5f train_loss %.5f", epoch + 1, probe_loss, train_losses[-1])
    result = ToyResult(losses, train_losses, lrs, weights)
    if log_path is not None:
        Path(log_path).write_text("\n".join(result.log_lines()) + "\n")
    return result
