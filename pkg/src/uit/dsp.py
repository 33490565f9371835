"""Log-Mel front-end and waveform/spectrogram augmentation.

Waveforms are 1-D float32 arrays at 16 kHz; spectrograms are ``[frames, mels]``
arrays. Mel scale is HTK (``2595 * log10(1 + f / 700)``) over 0-8000 Hz, the
STFT uses a periodic Hann window with no centre padding, and the log is
natural with a floor of 1e-10.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 64
    win_ms: float = 32.0
    hop_ms: float = 10.0
    fft_size: int = 512
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 0 <= self.fmin < self.fmax <= SAMPLE_RATE / 2:
            raise ValueError(f"need 0 <= fmin < fmax <= {SAMPLE_RATE // 2}, got {self.fmin}, {self.fmax}")
        if self.fft_size < self.win_length:
            raise ValueError(f"fft_size {self.fft_size} shorter than window {self.win_length}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def win_length(self) -> int:
        return int(round(self.win_ms * SAMPLE_RATE / 1000))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * SAMPLE_RATE / 1000))

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.win_length) // self.hop_length


@dataclass(frozen=True)
class AugmentSpec:
    max_shift_fraction: float = 0.1
    gain_db_range: tuple = (-6.0, 6.0)
    polarity_prob: float = 0.5
    specaug_time_masks: int = 2
    specaug_time_width: int = 20
    specaug_freq_masks: int = 2
    specaug_freq_width: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.max_shift_fraction <= 1:
            raise ValueError("max_shift_fraction must be in [0, 1]")
        if not 0 <= self.polarity_prob <= 1:
            raise ValueError("polarity_prob must be in [0, 1]")
        lo, hi = self.gain_db_range
        if lo > hi:
            raise ValueError(f"gain_db_range {self.gain_db_range} is reversed")
        if min(self.specaug_time_masks, self.specaug_time_width,
               self.specaug_freq_masks, self.specaug_freq_width) < 0:
            raise ValueError("mask counts and widths must be non-negative")

    @classmethod
    def identity(cls, rng_seed: int = 0) -> "AugmentSpec":
        return cls(0.0, (0.0, 0.0), 0.0, 0, 0, 0, 0, rng_seed)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Centre frequency (Hz) of every triangular filter."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    return edges[1:-1]


@lru_cache(maxsize=8)
def mel_filterbank(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Triangular filters, shape ``[fft_size // 2 + 1, n_mels]``, unit peak height."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.fft.rfftfreq(cfg.fft_size, d=1.0 / SAMPLE_RATE)
    lo, mid, hi = edges[:-2], edges[1:-1], edges[2:]
    up = (freqs[:, None] - lo) / (mid - lo)
    down = (hi - freqs[:, None]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    fb.setflags(write=False)
    return fb


def _check_wave(wave, sample_rate) -> np.ndarray:
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"sample rate must be {SAMPLE_RATE} Hz, got {sample_rate}")
    wave = np.asarray(wave, dtype=np.float32)
    if wave.ndim != 1:
        raise ValueError(f"expected mono 1-D waveform, got shape {wave.shape}")
    if not np.all(np.isfinite(wave)):
        raise ValueError("waveform contains non-finite samples")
    return wave


def log_mel(wave, cfg: MelConfig = MelConfig(), sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Log-Mel spectrogram ``[T, n_mels]`` with ``T = 1 + (len - win) // hop``."""
    wave = _check_wave(wave, sample_rate)
    win, hop = cfg.win_length, cfg.hop_length
    if wave.size < win:
        raise ValueError(f"waveform has {wave.size} samples; need at least {win}")
    frames = np.lib.stride_tricks.sliding_window_view(wave, win)[::hop].astype(np.float64)
    window = get_window("hann", win, fftbins=True)
    spec = np.fft.rfft(frames * window, n=cfg.fft_size, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    mel = power @ mel_filterbank(cfg)
    return np.log(np.maximum(mel, cfg.log_floor)).astype(np.float32)


def _rng(spec: AugmentSpec, rng):
    return rng if rng is not None else np.random.default_rng(spec.rng_seed)


def augment_waveform(wave, spec: AugmentSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Random zero-padded shift, dB gain and polarity flip; clipped to [-1, 1]."""
    rng = _rng(spec, rng)
    out = np.asarray(wave, dtype=np.float32).copy()
    n = out.size
    max_shift = int(spec.max_shift_fraction * n)
    if max_shift > 0:
        shift = int(rng.integers(-max_shift, max_shift + 1))
        if shift > 0:
            out[shift:] = out[:-shift].copy()
            out[:shift] = 0.0
        elif shift < 0:
            out[:shift] = out[-shift:].copy()
            out[shift:] = 0.0
    lo, hi = spec.gain_db_range
    if hi > lo or lo != 0.0:
        out *= np.float32(10.0 ** (rng.uniform(lo, hi) / 20.0))
    if spec.polarity_prob > 0 and rng.random() < spec.polarity_prob:
        out = -out
    return np.clip(out, -1.0, 1.0)


def spec_augment(sg, spec: AugmentSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Time and frequency masking; masked cells take the input's mean value."""
    rng = _rng(spec, rng)
    sg = np.asarray(sg)
    n_t, n_f = sg.shape
    if spec.specaug_time_masks and spec.specaug_time_width >= n_t:
        raise ValueError(f"time mask width {spec.specaug_time_width} >= {n_t} frames")
    if spec.specaug_freq_masks and spec.specaug_freq_width >= n_f:
        raise ValueError(f"freq mask width {spec.specaug_freq_width} >= {n_f} bins")
    out = sg.copy()
    fill = sg.mean()
    for _ in range(spec.specaug_time_masks):
        w = int(rng.integers(0, spec.specaug_time_width + 1))
        t0 = int(rng.integers(0, n_t - w + 1))
        out[t0:t0 + w, :] = fill
    for _ in range(spec.specaug_freq_masks):
        w = int(rng.integers(0, spec.specaug_freq_width + 1))
        f0 = int(rng.integers(0, n_f - w + 1))
        out[:, f0:f0 + w] = fill
    return out


def read_wav(path) -> np.ndarray:
    """Load a mono 16 kHz WAV (16-bit PCM or 32-bit float) as float32 in [-1, 1]."""
    try:
        sr, data = wavfile.read(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"no such WAV file: {path}") from None
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None
    if sr != SAMPLE_RATE:
        raise ValueError(f"{path}: sample rate {sr} Hz, expected {SAMPLE_RATE}")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        return (data.astype(np.float32) / 32768.0)
    if data.dtype == np.float32:
        return data
    raise ValueError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(path, wave) -> None:
    wavfile.write(path, SAMPLE_RATE, np.asarray(wave, dtype=np.float32))
