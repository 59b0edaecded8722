"""Forward and backward passes for each layer, on batched numpy arrays.

Shapes use B for batch, L for sequence length, E for embedding width, F for
conv filters and H for LSTM hidden units per direction. Every ``*_forward``
returns ``(output, cache)`` and the matching ``*_backward`` consumes the cache.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NumericError(FloatingPointError):
    """A non-finite value appeared inside the network."""


def check_finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {where}")
    return arr


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0)


# -- embedding ---------------------------------------------------------------

def embedding_forward(ids: np.ndarray, table: np.ndarray):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"token id out of range for vocabulary of size {table.shape[0]}")
    return table[ids], ids


def embedding_backward(dout: np.ndarray, cache, vocab_size: int) -> np.ndarray:
    ids = cache
    dtable = np.zeros((vocab_size, dout.shape[-1]), dtype=dout.dtype)
    np.add.at(dtable, ids.reshape(-1), dout.reshape(-1, dout.shape[-1]))
    return dtable


# -- 1D convolution, same padding --------------------------------------------

def conv1d_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "relu"):
    """``out[t, f] = b[f] + sum_{k,e} W[k, e, f] * x[t + k - (K-1)//2, e]``, zero padded."""
    if x.ndim == 2:
        out, cache = conv1d_forward(x[None], W, b, activation)
        return out[0], ("unbatched", cache)
    B, L, E = x.shape
    K, E_w, F = W.shape
    if E_w != E or b.shape != (F,):
        raise ValueError(f"conv1d shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    if K % 2 == 0:
        raise ValueError(f"conv kernel size must be odd, got {K}")
    half = (K - 1) // 2
    xp = np.pad(x, ((0, 0), (half, half), (0, 0)))
    # (B, L, E, K) -> (B, L, K, E) -> (B*L, K*E)
    cols = sliding_window_view(xp, K, axis=1).transpose(0, 1, 3, 2).reshape(B * L, K * E)
    pre = (cols @ W.reshape(K * E, F)).reshape(B, L, F) + b
    out = relu(pre) if activation == "relu" else pre
    return out, (cols, pre, x.shape, W, activation)


def conv1d_backward(dout: np.ndarray, cache):
    """Returns ``(dx, dW, db)``."""
    if isinstance(cache[0], str):
        dx, dW, db = conv1d_backward(dout[None], cache[1])
        return dx[0], dW, db
    cols, pre, (B, L, E), W, activation = cache
    K, _, F = W.shape
    half = (K - 1) // 2
    dpre = dout * (pre > 0) if activation == "relu" else dout
    dpre2 = dpre.reshape(B * L, F)
    dW = (cols.T @ dpre2).reshape(K, E, F)
    db = dpre2.sum(axis=0)
    dcols = (dpre2 @ W.reshape(K * E, F).T).reshape(B, L, K, E)
    dxp = np.zeros((B, L + K - 1, E), dtype=dout.dtype)
    for k in range(K):
        dxp[:, k : k + L] += dcols[:, :, k]
    return dxp[:, half : half + L], dW, db


# -- LSTM --------------------------------------------------------------------
# Gate blocks along the 4H axis are ordered input, forget, cell, output.

def _gates(z, c_prev):
    H = c_prev.shape[-1]
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (c_prev, i, f, g, o, tc)


def _gates_backward(dh, dc, core):
    """Returns ``(dz, dc_prev)``."""
    c_prev, i, f, g, o, tc = core
    dct = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dct * g * i * (1.0 - i),
            dct * c_prev * f * (1.0 - f),
            dct * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ],
        axis=-1,
    )
    return dz, dct * f


def lstm_cell(x_t, h_prev, c_prev, Wx, Wh, b):
    """One LSTM step.

    i = sigmoid(x Wx_i + h Wh_i + b_i), likewise f and o; g uses tanh.
    c = f * c_prev + i * g;  h = o * tanh(c).
    """
    h, c, core = _gates(x_t @ Wx + h_prev @ Wh + b, c_prev)
    return h, c, (x_t, h_prev, core)


def lstm_cell_backward(dh, dc, cache, Wx, Wh):
    """Returns ``(dx, dh_prev, dc_prev, dWx, dWh, db)``."""
    x_t, h_prev, core = cache
    dz, dc_prev = _gates_backward(dh, dc, core)
    if x_t.ndim == 1:
        dWx, dWh, db = np.outer(x_t, dz), np.outer(h_prev, dz), dz
    else:
        dWx, dWh, db = x_t.T @ dz, h_prev.T @ dz, dz.sum(axis=0)
    return dz @ Wx.T, dz @ Wh.T, dc_prev, dWx, dWh, db


def lstm_scan(x, lengths, Wx, Wh, b, reverse: bool = False):
    """Run one LSTM direction over a padded batch.

    Only steps ``t < lengths[n]`` update sample ``n``; the state is carried
    unchanged across padding. The reverse direction therefore starts from a
    zero state at the last real character. Returns ``(states, final, cache)``
    where ``states[:, t]`` is the state after visiting step t.
    """
    B, L, _ = x.shape
    H = Wh.shape[0]
    T = int(lengths.max())
    # input projections for every step at once; only the recurrence is sequential
    xz = x[:, :T] @ Wx + b
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    states = np.zeros((B, L, H), dtype=x.dtype)
    h_prev_all = np.zeros((B, T, H), dtype=x.dtype)
    order = range(T - 1, -1, -1) if reverse else range(T)
    steps = []
    for t in order:
        m = (t < lengths)[:, None].astype(x.dtype)
        h_prev_all[:, t] = h
        h_new, c_new, core = _gates(xz[:, t] + h @ Wh, c)
        h = m * h_new + (1 - m) * h
        c = m * c_new + (1 - m) * c
        states[:, t] = h
        steps.append((t, m, core))
    return states, h, (steps, x, h_prev_all, Wx, Wh)


def lstm_scan_backward(dstates, dfinal, cache):
    """Backpropagation through time for :func:`lstm_scan`.

    ``dstates`` is the gradient w.r.t. every emitted state (or None) and
    ``dfinal`` the gradient w.r.t. the final state. Returns ``(dx, dWx, dWh, db)``.
    """
    steps, x, h_prev_all, Wx, Wh = cache
    B, L, F = x.shape
    T = h_prev_all.shape[1]
    H = Wh.shape[0]
    dtype = dfinal.dtype
    dz_all = np.zeros((B, T, 4 * H), dtype=dtype)
    dh = dfinal.copy()
    dc = np.zeros((B, H), dtype=dtype)
    for t, m, core in reversed(steps):
        if dstates is not None:
            dh = dh + dstates[:, t]
        dz, dc_prev = _gates_backward(m * dh, m * dc, core)
        dz_all[:, t] = dz
        dh = dz @ Wh.T + (1 - m) * dh
        dc = dc_prev + (1 - m) * dc
    dz2 = dz_all.reshape(B * T, 4 * H)
    dWx = x[:, :T].reshape(B * T, F).T @ dz2
    dWh = h_prev_all.reshape(B * T, H).T @ dz2
    db = dz2.sum(axis=0)
    dx = np.zeros((B, L, F), dtype=dtype)
    dx[:, :T] = dz_all @ Wx.T
    return dx, dWx, dWh, db


def bilstm_forward(x, lengths, fwd, bwd, pooling: str = "last"):
    """Bidirectional LSTM; ``fwd``/``bwd`` are ``(Wx, Wh, b)`` triples.

    Returns the (B, 2H) concatenation of the two directions' pooled states:
    the final state per direction for ``pooling="last"``, or the mean over
    real steps for ``pooling="mean"``.
    """
    lengths = np.asarray(lengths)
    if lengths.min() < 1:
        raise ValueError("every sequence needs at least one real token")
    states_f, last_f, cache_f = lstm_scan(x, lengths, *fwd, reverse=False)
    states_b, last_b, cache_b = lstm_scan(x, lengths, *bwd, reverse=True)
    if pooling == "last":
        out = np.concatenate([last_f, last_b], axis=-1)
    elif pooling == "mean":
        mask = (np.arange(x.shape[1])[None, :] < lengths[:, None]).astype(x.dtype)[..., None]
        denom = lengths.astype(x.dtype)[:, None]
        out = np.concatenate([(states_f * mask).sum(1) / denom, (states_b * mask).sum(1) / denom], axis=-1)
    else:
        raise ValueError(f"unknown pooling {pooling!r}")
    return out, (cache_f, cache_b, lengths, pooling, x.shape)


def bilstm_backward(dout, cache):
    """Returns ``(dx, (dWx_f, dWh_f, db_f), (dWx_b, dWh_b, db_b))``."""
    cache_f, cache_b, lengths, pooling, (B, L, F) = cache
    H = dout.shape[-1] // 2
    d_f, d_b = dout[:, :H], dout[:, H:]
    if pooling == "last":
        dx_f, *g_f = lstm_scan_backward(None, d_f, cache_f)
        dx_b, *g_b = lstm_scan_backward(None, d_b, cache_b)
    else:
        mask = (np.arange(L)[None, :] < lengths[:, None]).astype(dout.dtype)[..., None]
        denom = lengths.astype(dout.dtype)[:, None, None]
        zero = np.zeros_like(d_f)
        dx_f, *g_f = lstm_scan_backward(mask * d_f[:, None, :] / denom, zero, cache_f)
        dx_b, *g_b = lstm_scan_backward(mask * d_b[:, None, :] / denom, zero, cache_b)
    return dx_f + dx_b, tuple(g_f), tuple(g_b)


# -- dense -------------------------------------------------------------------

_ACTIVATIONS = ("relu", "sigmoid", "none")


def dense_forward(x, W, b, activation: str = "none"):
    """``activation(x @ W + b)`` with W stored (in, out)."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ValueError(f"dense shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    pre = x @ W + b
    if activation == "relu":
        out = relu(pre)
    elif activation == "sigmoid":
        out = sigmoid(pre)
    else:
        out = pre
    return out, (x, W, pre, out, activation)


def dense_backward(dout, cache):
    """Returns ``(dx, dW, db)``."""
    x, W, pre, out, activation = cache
    if activation == "relu":
        dpre = dout * (pre > 0)
    elif activation == "sigmoid":
        dpre = dout * out * (1.0 - out)
    else:
        dpre = dout
    if x.ndim == 1:
        return W @ dpre, np.outer(x, dpre), dpre
    return dpre @ W.T, x.T @ dpre, dpre.sum(axis=0)
