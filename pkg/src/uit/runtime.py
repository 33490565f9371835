"""Chunked clip inference and the model-latency benchmark."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import model as M
from .dsp import SAMPLE_RATE, MelConfig, log_mel

DEFAULT_MEL = MelConfig()


def split_chunks(wave, seconds: float = 1.0) -> np.ndarray:
    """``[n_chunks, chunk_len]`` view of ``wave``, zero-padding the last chunk."""
    wave = np.asarray(wave, dtype=np.float32)
    if wave.ndim != 1 or wave.size == 0:
        raise ValueError("expected a non-empty mono waveform")
    n = int(round(seconds * SAMPLE_RATE))
    n_chunks = -(-wave.size // n)
    padded = np.zeros(n_chunks * n, np.float32)
    padded[: wave.size] = wave
    return padded.reshape(n_chunks, n)


def chunk_scores(wave, w, cfg: M.UiTConfig, seconds: float = 1.0, mel: MelConfig = DEFAULT_MEL) -> np.ndarray:
    """Per-chunk label probabilities, ``[n_chunks, n_labels]``."""
    M.validate_weights(w, cfg)
    chunks = split_chunks(wave, seconds)
    tokens = np.stack([M.patchify(log_mel(c, mel), cfg) for c in chunks])
    return M.score(M.forward(tokens, w, cfg, check=False))


def infer_clip(wave, w, cfg: M.UiTConfig, seconds: float = 1.0, mel: MelConfig = DEFAULT_MEL) -> np.ndarray:
    """Average of the per-chunk probabilities over consecutive ``seconds`` chunks."""
    return chunk_scores(wave, w, cfg, seconds, mel).mean(axis=0)


@dataclass
class LatencyReport:
    model: str
    warmup_iters: int
    trials: int
    samples_ms: np.ndarray
    with_features: bool = False

    @property
    def mean_ms(self) -> float:
        return float(self.samples_ms.mean())

    @property
    def median_ms(self) -> float:
        return float(np.median(self.samples_ms))

    @property
    def p95_ms(self) -> float:
        return float(np.percentile(self.samples_ms, 95))

    @property
    def std_ms(self) -> float:
        return float(self.samples_ms.std())

    def summary(self) -> dict:
        return {
            "model": self.model,
            "warmup_iters": self.warmup_iters,
            "trials": self.trials,
            "with_features": self.with_features,
            "mean_ms": round(self.mean_ms, 4),
            "median_ms": round(self.median_ms, 4),
            "p95_ms": round(self.p95_ms, 4),
            "std_ms": round(self.std_ms, 4),
        }


def time_calls(fn, trials: int, warmup: int) -> np.ndarray:
    """Wall-clock milliseconds of ``trials`` calls after ``warmup`` discarded calls."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for _ in range(warmup):
        fn()
    out = np.empty(trials)
    for i in range(trials):
        t0 = time.perf_counter_ns()
        fn()
        out[i] = (time.perf_counter_ns() - t0) / 1e6
    return out


def bench(models, trials: int = 1000, warmup: int = 10, with_features: bool = False, seed: int = 0) -> list:
    """Time a 1 s forward pass per model on a single BLAS thread, float32.

    ``models`` holds preset names or ``(name, UiTConfig)`` pairs. Inputs are
    patchified ahead of time unless ``with_features`` adds log-Mel extraction
    to every timed call.
    """
    if not models:
        raise ValueError("bench needs at least one model")
    rng = np.random.default_rng(seed)
    wave = (0.1 * rng.standard_normal(SAMPLE_RATE)).astype(np.float32)
    reports = []
    with threadpool_limits(limits=1):
        for item in models:
            name, cfg = (item, M.preset(item)) if isinstance(item, str) else item
            w = M.WeightStore(M.random_weights(cfg, rng), cfg)
            if with_features:
                def call(w=w, cfg=cfg):
                    M.forward(M.patchify(log_mel(wave), cfg), w, cfg, check=False)
            else:
                tokens = M.patchify(log_mel(wave), cfg)

                def call(w=w, cfg=cfg, tokens=tokens):
                    M.forward(tokens, w, cfg, check=False)
            samples = time_calls(call, trials, warmup)
            reports.append(LatencyReport(name, warmup, trials, samples, with_features))
    return reports
