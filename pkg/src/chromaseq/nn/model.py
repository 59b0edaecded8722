"""The character-level conv + BiLSTM + dense regression network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from ..text_codec import PAD, TokenSequence
from . import layers
from .layers import NumericError, check_finite


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_len: int
    embed_dim: int = 64
    conv_filters: int = 256
    conv_kernel: int = 5
    lstm_hidden: int = 256
    dense_dims: tuple[int, ...] = (256, 128)
    output_dim: int = 3
    pooling: str = "last"

    def __post_init__(self):
        object.__setattr__(self, "dense_dims", tuple(int(d) for d in self.dense_dims))
        for name in ("vocab_size", "max_len", "embed_dim", "conv_filters", "conv_kernel", "lstm_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if any(d < 1 for d in self.dense_dims):
            raise ValueError("dense dims must be >= 1")
        if self.conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if self.output_dim != 3:
            raise ValueError("output_dim is fixed at 3")
        if self.pooling not in ("last", "mean"):
            raise ValueError(f"pooling must be 'last' or 'mean', got {self.pooling!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dense_dims"] = list(self.dense_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "dense_dims": tuple(d.get("dense_dims", ()))})

    def dense_layers(self) -> list[tuple[int, int]]:
        widths = [2 * self.lstm_hidden, *self.dense_dims, self.output_dim]
        return list(zip(widths[:-1], widths[1:]))

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        V, E, F, K, H = self.vocab_size, self.embed_dim, self.conv_filters, self.conv_kernel, self.lstm_hidden
        shapes = {"embedding": (V, E), "conv.W": (K, E, F), "conv.b": (F,)}
        for d in ("fwd", "bwd"):
            shapes[f"lstm_{d}.Wx"] = (F, 4 * H)
            shapes[f"lstm_{d}.Wh"] = (H, 4 * H)
            shapes[f"lstm_{d}.b"] = (4 * H,)
        for n, (fan_in, fan_out) in enumerate(self.dense_layers()):
            shapes[f"dense{n}.W"] = (fan_in, fan_out)
            shapes[f"dense{n}.b"] = (fan_out,)
        return shapes


def parameter_count(config: ModelConfig) -> int:
    V, E, F, K, H = config.vocab_size, config.embed_dim, config.conv_filters, config.conv_kernel, config.lstm_hidden
    total = V * E + (K * E * F + F) + 2 * (4 * (F * H + H * H + H))
    for fan_in, fan_out in config.dense_layers():
        total += fan_in * fan_out + fan_out
    return total


@dataclass
class ModelParams:
    """Named trainable tensors, kept in :meth:`ModelConfig.param_shapes` order."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]

    def __setitem__(self, key: str, value: np.ndarray):
        self.tensors[key] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def keys(self):
        return self.tensors.keys()

    @property
    def dtype(self):
        return self.tensors["embedding"].dtype

    def size(self) -> int:
        return sum(a.size for a in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: v.astype(dtype) for k, v in self.tensors.items()})

    def validate(self, config: ModelConfig) -> None:
        shapes = config.param_shapes()
        if list(shapes) != list(self.tensors):
            raise ValueError(f"parameter names {list(self.tensors)} do not match config {list(shapes)}")
        for name, shape in shapes.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _orthogonal(rng, n, dtype):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.sign(np.diag(r))).astype(dtype)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, orthogonal recurrent blocks, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    V, E, F, K, H = config.vocab_size, config.embed_dim, config.conv_filters, config.conv_kernel, config.lstm_hidden
    p = {
        "embedding": _glorot(rng, (V, E), V, E, dtype),
        "conv.W": _glorot(rng, (K, E, F), K * E, K * F, dtype),
        "conv.b": np.zeros(F, dtype=dtype),
    }
    for d in ("fwd", "bwd"):
        p[f"lstm_{d}.Wx"] = _glorot(rng, (F, 4 * H), F, 4 * H, dtype)
        p[f"lstm_{d}.Wh"] = np.concatenate([_orthogonal(rng, H, dtype) for _ in range(4)], axis=1)
        b = np.zeros(4 * H, dtype=dtype)
        b[H : 2 * H] = 1.0
        p[f"lstm_{d}.b"] = b
    for n, (fan_in, fan_out) in enumerate(config.dense_layers()):
        p[f"dense{n}.W"] = _glorot(rng, (fan_in, fan_out), fan_in, fan_out, dtype)
        p[f"dense{n}.b"] = np.zeros(fan_out, dtype=dtype)
    return ModelParams(p)


def zero_params(config: ModelConfig, dtype=np.float64) -> ModelParams:
    return ModelParams({k: np.zeros(s, dtype=dtype) for k, s in config.param_shapes().items()})


def _as_batch(tokens, lengths=None):
    if isinstance(tokens, TokenSequence):
        return np.asarray([tokens.ids]), np.asarray([tokens.true_length])
    ids = np.asarray(tokens)
    if ids.ndim == 1:
        ids = ids[None]
    if lengths is None:
        lengths = (ids != PAD).sum(axis=1)
    return ids, np.atleast_1d(np.asarray(lengths))


def forward(ids, lengths, params: ModelParams, config: ModelConfig):
    """Batched forward pass. Returns ``(pred (B, 3), cache)``."""
    ids = np.asarray(ids)
    lengths = np.asarray(lengths)
    if lengths.min() < 1:
        raise ValueError("all-PAD input: every sequence needs true_length >= 1")
    dtype = params.dtype
    valid = (np.arange(ids.shape[1])[None, :] < lengths[:, None]).astype(dtype)[..., None]

    emb, c_emb = layers.embedding_forward(ids, params["embedding"])
    # zero PAD positions so the conv sees them exactly like its same-padding zeros
    x = emb * valid
    conv, c_conv = layers.conv1d_forward(x, params["conv.W"], params["conv.b"], "relu")
    check_finite(conv, "conv1d")
    fwd = (params["lstm_fwd.Wx"], params["lstm_fwd.Wh"], params["lstm_fwd.b"])
    bwd = (params["lstm_bwd.Wx"], params["lstm_bwd.Wh"], params["lstm_bwd.b"])
    h, c_lstm = layers.bilstm_forward(conv, lengths, fwd, bwd, config.pooling)
    check_finite(h, "bilstm")
    c_dense = []
    n_dense = len(config.dense_layers())
    for n in range(n_dense):
        act = "sigmoid" if n == n_dense - 1 else "relu"
        h, c = layers.dense_forward(h, params[f"dense{n}.W"], params[f"dense{n}.b"], act)
        check_finite(h, f"dense{n}")
        c_dense.append(c)
    return h, (c_emb, valid, c_conv, c_lstm, c_dense, config.vocab_size)


def backward(dpred, cache, params: ModelParams) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of all parameters given dLoss/dpred."""
    c_emb, valid, c_conv, c_lstm, c_dense, V = cache
    grads: dict[str, np.ndarray] = {}
    d = dpred
    for n in reversed(range(len(c_dense))):
        d, grads[f"dense{n}.W"], grads[f"dense{n}.b"] = layers.dense_backward(d, c_dense[n])
        check_finite(d, f"dense{n} backward")
    d, g_f, g_b = layers.bilstm_backward(d, c_lstm)
    check_finite(d, "bilstm backward")
    grads["lstm_fwd.Wx"], grads["lstm_fwd.Wh"], grads["lstm_fwd.b"] = g_f
    grads["lstm_bwd.Wx"], grads["lstm_bwd.Wh"], grads["lstm_bwd.b"] = g_b
    d, grads["conv.W"], grads["conv.b"] = layers.conv1d_backward(d, c_conv)
    check_finite(d, "conv1d backward")
    grads["embedding"] = layers.embedding_backward(d * valid, c_emb, V)
    return {k: grads[k] for k in params.keys()}


def mse_and_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch-mean of per-sample channel-mean squared error, and its gradient."""
    diff = pred - target
    n = pred.shape[0] * pred.shape[1]
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


def loss_and_grads(ids, lengths, targets, params: ModelParams, config: ModelConfig):
    pred, cache = forward(ids, lengths, params, config)
    loss, dpred = mse_and_grad(pred, np.asarray(targets, dtype=pred.dtype))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss, backward(dpred, cache, params)


def model_forward(tokens, params: ModelParams, config: ModelConfig, lengths=None) -> np.ndarray:
    """Predict normalized RGB for a TokenSequence (returns shape (3,)) or an id batch."""
    single = isinstance(tokens, TokenSequence) or np.asarray(tokens).ndim == 1
    ids, lengths = _as_batch(tokens, lengths)
    pred, _ = forward(ids, lengths, params, config)
    return pred[0] if single else pred


def model_backward(tokens, target, params: ModelParams, config: ModelConfig, lengths=None) -> dict[str, np.ndarray]:
    """Gradients of the MSE loss for a single sequence or a batch."""
    ids, lengths = _as_batch(tokens, lengths)
    target = np.asarray(target, dtype=params.dtype).reshape(-1, 3)
    return loss_and_grads(ids, lengths, target, params, config)[1]
