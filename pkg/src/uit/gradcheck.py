"""Finite-difference checks of every hand-written backward pass (float64)."""
from __future__ import annotations

import numpy as np

from . import model as M
from . import ops
from .labels import LabelSpace

STEP = 1e-4
# ReLU kinks sit inside the +-1e-4 stencil often enough to spoil whole-model
# checks; a narrower stencil is still far above float64 round-off.
RELU_MODEL_STEP = 1e-6


def _fd(loss_fn, x, step=STEP):
    return ops.numeric_grad(loss_fn, x, step)


def check_matmul(rng):
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    r = rng.normal(size=(4, 3))
    da, db = ops.matmul_backward(r, a, b)
    f = lambda: float((ops.matmul(a, b) * r).sum())
    return max(ops.max_relative_error(da, _fd(f, a)), ops.max_relative_error(db, _fd(f, b)))


def check_softmax(rng):
    x, r = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    dx = ops.softmax_rows_backward(r, ops.softmax_rows(x))
    return ops.max_relative_error(dx, _fd(lambda: float((ops.softmax_rows(x) * r).sum()), x))


def check_layer_norm(rng):
    x, r = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
    gamma, beta = rng.normal(size=8), rng.normal(size=8)
    _, cache = ops.layer_norm(x, gamma, beta)
    dx, dg, db = ops.layer_norm_backward(r, cache)
    f = lambda: float((ops.layer_norm(x, gamma, beta)[0] * r).sum())
    return max(ops.max_relative_error(dx, _fd(f, x)),
               ops.max_relative_error(dg, _fd(f, gamma)),
               ops.max_relative_error(db, _fd(f, beta)))


def check_relu(rng):
    x = rng.normal(size=16)
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    r = rng.normal(size=16)
    return ops.max_relative_error(ops.relu_backward(r, x), _fd(lambda: float((ops.relu(x) * r).sum()), x))


def check_gelu(rng):
    x, r = rng.normal(size=16) * 2, rng.normal(size=16)
    return ops.max_relative_error(ops.gelu_backward(r, x), _fd(lambda: float((ops.gelu(x) * r).sum()), x))


def check_bce(rng):
    z, y = rng.normal(size=(4, 7)) * 2, rng.uniform(size=(4, 7))
    return ops.max_relative_error(ops.bce_with_logits_backward(z, y), _fd(lambda: ops.bce_with_logits(z, y), z))


def tiny_config(activation="gelu", attention="bottleneck") -> M.UiTConfig:
    """L=1, D=8, U=2, N=4 tokens of 4x4 patches; three labels."""
    return M.UiTConfig(layers=1, dim=8, bottleneck=2, heads=2, mlp_dim=24, patch_t=4, patch_f=4,
                       n_mels=8, input_frames=8, activation=activation, attention=attention,
                       labels=LabelSpace.small(2, 1))


def check_model(rng, cfg: M.UiTConfig | None = None, batch: int = 2, step: float = STEP):
    """Worst relative error over every weight tensor of BCE(forward(.))."""
    cfg = cfg or tiny_config()
    w = M.random_weights(cfg, rng, scale=1.0, dtype=np.float64)
    tokens = rng.normal(size=(batch, cfg.n_tokens, cfg.patch_size))
    targets = rng.uniform(size=(batch, cfg.n_labels))
    _, grads = M.loss_and_grads(tokens, targets, w, cfg)
    f = lambda: ops.bce_with_logits(M.forward(tokens, w, cfg, check=False), targets)
    return max(ops.max_relative_error(grads[k], _fd(f, w[k], step)) for k in w)


OP_CHECKS = {
    "matmul": check_matmul,
    "softmax_rows": check_softmax,
    "layer_norm": check_layer_norm,
    "relu": check_relu,
    "gelu": check_gelu,
    "bce_with_logits": check_bce,
}


MODEL_CHECKS = {
    "model_gelu": lambda rng: check_model(rng, tiny_config("gelu")),
    "model_relu": lambda rng: check_model(rng, tiny_config("relu"), step=RELU_MODEL_STEP),
}

OP_TOL = 1e-4
MODEL_TOL = 1e-3


def run(seeds: int = 20) -> dict:
    """Worst error per check across ``seeds`` random draws."""
    checks = {**OP_CHECKS, **MODEL_CHECKS}
    return {name: max(fn(np.random.default_rng(s)) for s in range(seeds)) for name, fn in checks.items()}


def tolerance(name: str) -> float:
    return MODEL_TOL if name in MODEL_CHECKS else OP_TOL
