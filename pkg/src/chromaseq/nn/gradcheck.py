"""Central finite-difference gradient checks for every layer and the full model.

All checks run in float64. Layer checks use the scalar probe loss
``sum(out * R)`` for a fixed random ``R``; the composed check uses the MSE loss.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import layers
from .model import ModelConfig, forward, init_params, loss_and_grads, mse_and_grad

STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central differences of ``f()`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * step)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> float:
    """Max over entries of ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _probe(rng, shape):
    return rng.standard_normal(shape)


def check_embedding(rng) -> dict[str, float]:
    V, E, B, L = 7, 4, 2, 5
    table = rng.standard_normal((V, E))
    ids = rng.integers(0, V, size=(B, L))
    R = _probe(rng, (B, L, E))

    def f():
        return float(np.sum(layers.embedding_forward(ids, table)[0] * R))

    _, cache = layers.embedding_forward(ids, table)
    analytic = layers.embedding_backward(R, cache, V)
    return {"embedding.table": rel_error(analytic, numeric_grad(f, table))}


def check_conv1d(rng) -> dict[str, float]:
    B, L, E, F, K = 2, 4, 2, 3, 3
    x = rng.standard_normal((B, L, E))
    W = rng.standard_normal((K, E, F)) * 0.5
    b = rng.standard_normal(F) * 0.1
    R = _probe(rng, (B, L, F))

    def f():
        return float(np.sum(layers.conv1d_forward(x, W, b)[0] * R))

    out, cache = layers.conv1d_forward(x, W, b)
    dx, dW, db = layers.conv1d_backward(R, cache)
    return {
        "conv1d.x": rel_error(dx, numeric_grad(f, x)),
        "conv1d.W": rel_error(dW, numeric_grad(f, W)),
        "conv1d.b": rel_error(db, numeric_grad(f, b)),
    }


def check_lstm_cell(rng) -> dict[str, float]:
    B, F, H = 3, 4, 5
    x = rng.standard_normal((B, F))
    h = rng.standard_normal((B, H)) * 0.5
    c = rng.standard_normal((B, H)) * 0.5
    Wx = rng.standard_normal((F, 4 * H)) * 0.5
    Wh = rng.standard_normal((H, 4 * H)) * 0.5
    b = rng.standard_normal(4 * H) * 0.1
    Rh = _probe(rng, (B, H))
    Rc = _probe(rng, (B, H))

    def f():
        h_t, c_t, _ = layers.lstm_cell(x, h, c, Wx, Wh, b)
        return float(np.sum(h_t * Rh) + np.sum(c_t * Rc))

    _, _, cache = layers.lstm_cell(x, h, c, Wx, Wh, b)
    dx, dh, dc, dWx, dWh, db = layers.lstm_cell_backward(Rh, Rc, cache, Wx, Wh)
    return {
        "lstm_cell.x": rel_error(dx, numeric_grad(f, x)),
        "lstm_cell.h_prev": rel_error(dh, numeric_grad(f, h)),
        "lstm_cell.c_prev": rel_error(dc, numeric_grad(f, c)),
        "lstm_cell.Wx": rel_error(dWx, numeric_grad(f, Wx)),
        "lstm_cell.Wh": rel_error(dWh, numeric_grad(f, Wh)),
        "lstm_cell.b": rel_error(db, numeric_grad(f, b)),
    }


def check_bilstm(rng, pooling: str = "last") -> dict[str, float]:
    B, L, F, H = 3, 6, 8, 5
    x = rng.standard_normal((B, L, F))
    lengths = np.array([6, 3, 1])
    fwd = [rng.standard_normal(s) * 0.4 for s in ((F, 4 * H), (H, 4 * H), (4 * H,))]
    bwd = [rng.standard_normal(s) * 0.4 for s in ((F, 4 * H), (H, 4 * H), (4 * H,))]
    R = _probe(rng, (B, 2 * H))

    def f():
        return float(np.sum(layers.bilstm_forward(x, lengths, fwd, bwd, pooling)[0] * R))

    _, cache = layers.bilstm_forward(x, lengths, fwd, bwd, pooling)
    dx, g_f, g_b = layers.bilstm_backward(R, cache)
    out = {f"bilstm[{pooling}].x": rel_error(dx, numeric_grad(f, x))}
    for tag, params, grads in (("fwd", fwd, g_f), ("bwd", bwd, g_b)):
        for name, p, g in zip(("Wx", "Wh", "b"), params, grads):
            out[f"bilstm[{pooling}].{tag}.{name}"] = rel_error(g, numeric_grad(f, p))
    return out


def check_dense(rng) -> dict[str, float]:
    out = {}
    for act in ("relu", "sigmoid", "none"):
        x = rng.standard_normal((3, 4))
        W = rng.standard_normal((4, 3))
        b = rng.standard_normal(3) * 0.1
        R = _probe(rng, (3, 3))

        def f():
            return float(np.sum(layers.dense_forward(x, W, b, act)[0] * R))

        _, cache = layers.dense_forward(x, W, b, act)
        dx, dW, db = layers.dense_backward(R, cache)
        out[f"dense[{act}].x"] = rel_error(dx, numeric_grad(f, x))
        out[f"dense[{act}].W"] = rel_error(dW, numeric_grad(f, W))
        out[f"dense[{act}].b"] = rel_error(db, numeric_grad(f, b))
    return out


SMALL_CONFIG = ModelConfig(
    vocab_size=8, max_len=6, embed_dim=4, conv_filters=5, conv_kernel=3,
    lstm_hidden=4, dense_dims=(6, 5),
)


def check_model(rng, config: ModelConfig = SMALL_CONFIG) -> dict[str, float]:
    params = init_params(config, seed=int(rng.integers(1 << 31)), dtype=np.float64)
    # nonzero biases so ReLU kinks and gate saturation are exercised
    for name in params.keys():
        if name.endswith(".b"):
            params[name] += rng.standard_normal(params[name].shape) * 0.1
    B, L = 3, config.max_len
    lengths = np.array([L, max(1, L // 2), 1])
    ids = rng.integers(2, config.vocab_size, size=(B, L))
    ids[np.arange(L)[None, :] >= lengths[:, None]] = 0
    targets = rng.uniform(0, 1, size=(B, 3))

    def f():
        pred, _ = forward(ids, lengths, params, config)
        return mse_and_grad(pred, targets)[0]

    _, grads = loss_and_grads(ids, lengths, targets, params, config)
    return {f"model[{config.pooling}].{k}": rel_error(grads[k], numeric_grad(f, params[k])) for k in params.keys()}


def run_all(seed: int = 0) -> dict[str, float]:
    """Run every check; returns the max relative error per tensor."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}
    results.update(check_embedding(rng))
    results.update(check_conv1d(rng))
    results.update(check_lstm_cell(rng))
    results.update(check_bilstm(rng, "last"))
    results.update(check_bilstm(rng, "mean"))
    results.update(check_dense(rng))
    results.update(check_model(rng))
    mean_cfg = ModelConfig(**{**SMALL_CONFIG.to_dict(), "pooling": "mean"})
    results.update(check_model(rng, mean_cfg))
    return results
