"""The ``CSQ1`` checkpoint container.

Layout (all integers little-endian)::

    b"CSQ1"                      4 bytes magic
    manifest_length              uint64
    manifest                     UTF-8 JSON, manifest_length bytes
    tensor blobs                 float32 LE, concatenated in directory order

The manifest holds ``format_version``, ``config``, ``vocab`` (ordered
character list), ``tensors`` (directory of ``name``, ``shape``, ``offset``,
``length``; offsets and lengths in bytes relative to the blob section),
``optimizer_step`` (or null) and free-form ``metadata``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn.model import ModelConfig, ModelParams, parameter_count
from .text_codec import Vocabulary
from .training import OptimizerState

MAGIC = b"CSQ1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: ModelParams
    optimizer: OptimizerState | None = None
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _tensor_items(ckpt: Checkpoint):
    yield from ckpt.params.items()
    if ckpt.optimizer is not None:
        for name in ckpt.params.keys():
            yield f"adam.m/{name}", ckpt.optimizer.m[name]
        for name in ckpt.params.keys():
            yield f"adam.v/{name}", ckpt.optimizer.v[name]


def save(ckpt: Checkpoint, path) -> None:
    ckpt.params.validate(ckpt.config)
    if ckpt.vocab.size != ckpt.config.vocab_size:
        raise CheckpointError(f"vocabulary size {ckpt.vocab.size} != config vocab_size {ckpt.config.vocab_size}")
    directory, blobs, offset = [], [], 0
    for name, arr in _tensor_items(ckpt):
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"refusing to save non-finite values in {name}")
        blob = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "length": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": ckpt.format_version,
        "config": ckpt.config.to_dict(),
        "vocab": list(ckpt.vocab.chars),
        "tensors": directory,
        "optimizer_step": None if ckpt.optimizer is None else ckpt.optimizer.step,
        "metadata": ckpt.metadata,
    }
    head = json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def read_manifest(path) -> tuple[dict, int]:
    """Validate magic and version; return the manifest and the blob-section offset."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        raw_len = fh.read(_LEN.size)
        if len(raw_len) != _LEN.size:
            raise CheckpointError(f"{path}: truncated manifest header")
        (n,) = _LEN.unpack(raw_len)
        head = fh.read(n)
    if len(head) != n:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format version {version!r} (reader supports {FORMAT_VERSION})")
    return manifest, 4 + _LEN.size + n


def load(path) -> Checkpoint:
    path = Path(path)
    try:
        manifest, blob_start = read_manifest(path)
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    try:
        config = ModelConfig.from_dict(manifest["config"])
        vocab = Vocabulary(tuple(manifest["vocab"]))
        directory = manifest["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid manifest: {exc}") from exc
    if vocab.size != config.vocab_size:
        raise CheckpointError(f"{path}: vocabulary size {vocab.size} != config vocab_size {config.vocab_size}")

    # every shape is checked against the config before any tensor is read
    shapes = config.param_shapes()
    step = manifest.get("optimizer_step")
    expected = list(shapes.items())
    if step is not None:
        expected += [(f"adam.m/{k}", s) for k, s in shapes.items()]
        expected += [(f"adam.v/{k}", s) for k, s in shapes.items()]
    if [d.get("name") for d in directory] != [name for name, _ in expected]:
        raise CheckpointError(f"{path}: tensor directory does not match config")
    offset = 0
    for entry, (name, shape) in zip(directory, expected):
        if tuple(entry["shape"]) != shape:
            raise CheckpointError(f"{path}: {name} has shape {tuple(entry['shape'])}, config expects {shape}")
        if entry["length"] != int(np.prod(shape)) * _F32.itemsize or entry["offset"] != offset:
            raise CheckpointError(f"{path}: {name} has inconsistent offset/length")
        offset += entry["length"]

    blob_len = path.stat().st_size - blob_start
    if blob_len < offset:
        raise CheckpointError(f"{path}: tensor directory overrun ({offset} bytes declared, {blob_len} present)")
    if blob_len > offset:
        raise CheckpointError(f"{path}: {blob_len - offset} trailing bytes after tensor blobs")

    with open(path, "rb") as fh:
        fh.seek(blob_start)
        blob = fh.read(offset)
    tensors = {}
    for entry in directory:
        arr = np.frombuffer(blob, dtype=_F32, count=int(np.prod(entry["shape"])), offset=entry["offset"])
        arr = arr.astype(np.float32).reshape(entry["shape"])
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: non-finite values in {entry['name']}")
        tensors[entry["name"]] = arr

    params = ModelParams({k: tensors[k] for k in shapes})
    if params.size() != parameter_count(config):
        raise CheckpointError(f"{path}: parameter count mismatch")
    optimizer = None
    if step is not None:
        optimizer = OptimizerState({k: tensors[f"adam.m/{k}"] for k in shapes},
                                   {k: tensors[f"adam.v/{k}"] for k in shapes}, int(step))
    return Checkpoint(config, vocab, params, optimizer, manifest.get("metadata", {}), manifest["format_version"])
