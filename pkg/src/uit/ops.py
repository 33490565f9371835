"""Dense tensor kernels with hand-written backward passes.

Tensors are plain numpy arrays. Inference runs in float32; gradient checks
run the same kernels in float64. Every ``*_backward`` takes the upstream
gradient plus whatever the forward needs and returns input gradients.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product over the last two axes.

    ``b`` is either a plain matrix shared across all leading axes of ``a``
    (a weight) or has exactly the same leading axes as ``a``.
    """
    ok = a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2]
    if ok and b.ndim > 2:
        ok = a.shape[:-2] == b.shape[:-2]
    if not ok:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def matmul_backward(dc: np.ndarray, a: np.ndarray, b: np.ndarray):
    da = dc @ np.swapaxes(b, -1, -2)
    if b.ndim == 2 and a.ndim > 2:
        db = a.reshape(-1, a.shape[-1]).T @ dc.reshape(-1, dc.shape[-1])
    else:
        db = np.swapaxes(a, -1, -2) @ dc
    return da, db


def softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    # y is the softmax output
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LN_EPS):
    """Normalize over the last axis.

    Returns ``(y, cache)``; pass the cache to :func:`layer_norm_backward`.
    """
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gamma + beta, (xhat, rstd, gamma)


def layer_norm_backward(dy: np.ndarray, cache):
    xhat, rstd, gamma = cache
    lead = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=lead)
    dbeta = dy.sum(axis=lead)
    dxhat = dy * gamma
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GeLU, ``x * Phi(x)`` with the Gaussian CDF (no tanh approximation)."""
    return x * (0.5 * (1.0 + erf(x / _SQRT2))).astype(x.dtype, copy=False)


def gelu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return (dy * (cdf + x * pdf)).astype(x.dtype, copy=False)


ACTIVATIONS = {
    "relu": (relu, relu_backward),
    "gelu": (gelu, gelu_backward),
}


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""
    x = np.asarray(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross entropy over every entry, in the stable logits form."""
    if logits.shape != targets.shape:
        raise ValueError(f"bce shape mismatch: logits {logits.shape} vs targets {targets.shape}")
    if np.any(targets < 0) or np.any(targets > 1):
        raise ValueError("bce targets must lie in [0, 1]")
    z = logits
    loss = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean())


def bce_with_logits_backward(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (sigmoid(logits) - targets) / logits.size


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest absolute deviation relative to the tensor's own magnitude.

    Elementwise ratios blow up on entries whose true gradient is ~0, so the
    deviation is scaled by the larger of the two infinity norms instead.
    ``floor`` bounds the scale from below for gradients that vanish
    identically (e.g. key biases, which softmax cancels).
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_grad(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * step)
    return g
