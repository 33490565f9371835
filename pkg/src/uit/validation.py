"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_waveforms(X) -> np.ndarray:
    """2-D ``[n_clips, n_samples]`` float32 batch of equal-length waveforms."""
    X = check_array(X, dtype=np.float32, ensure_2d=True, input_name="X")
    return X


def check_spectrograms(X, n_mels: int, min_frames: int) -> np.ndarray:
    """3-D ``[n_clips, frames, mels]`` float32 batch."""
    X = check_array(X, dtype=np.float32, allow_nd=True, ensure_2d=False, input_name="X")
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected spectrograms shaped [n, frames, mels], got {X.shape}")
    if X.shape[2] != n_mels:
        raise ValueError(f"spectrograms have {X.shape[2]} mel bins, expected {n_mels}")
    if X.shape[1] < min_frames:
        raise ValueError(f"spectrograms have {X.shape[1]} frames, need at least {min_frames}")
    return X


def check_targets(Y, n_samples: int, n_labels: int) -> np.ndarray:
    Y = check_array(Y, dtype=np.float32, input_name="Y")
    if Y.shape != (n_samples, n_labels):
        raise ValueError(f"targets have shape {Y.shape}, expected ({n_samples}, {n_labels})")
    if np.any(Y < 0) or np.any(Y > 1):
        raise ValueError("targets must lie in [0, 1]")
    return Y
