import json
import struct

import numpy as np
import pytest

from chromaseq import checkpoint as ck
from chromaseq.active_learning import predict_colors
from chromaseq.nn.model import ModelConfig, init_params, model_forward, parameter_count
from chromaseq.text_codec import Vocabulary, encode_batch
from chromaseq.training import OptimizerState

VOCAB = Vocabulary(tuple(" abcdefghijklmnopqrstuvwxyz"))
CFG = ModelConfig(vocab_size=VOCAB.size, max_len=12, embed_dim=6, conv_filters=7, lstm_hidden=5, dense_dims=(8, 4))


def _random_names(rng, n):
    letters = list("abcdefghijklmnopqrstuvwxyz ")
    return ["".join(rng.choice(letters, size=rng.integers(1, 16))).strip() or "x" for _ in range(n)]


@pytest.fixture
def checkpoint_obj():
    params = init_params(CFG, seed=11)
    opt = OptimizerState.zeros_like(params)
    opt.m["conv.b"] += 0.25
    opt.step = 9
    return ck.Checkpoint(CFG, VOCAB, params, opt, {"seed": 11, "note": "ünïcode"})


def test_round_trip_bitwise(tmp_path, checkpoint_obj, rng):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    back = ck.load(path)
    assert back.config == CFG and back.vocab == VOCAB
    assert back.metadata == checkpoint_obj.metadata
    assert back.optimizer.step == 9
    assert np.array_equal(back.optimizer.m["conv.b"], checkpoint_obj.optimizer.m["conv.b"])
    for k in checkpoint_obj.params.keys():
        assert back.params[k].tobytes() == checkpoint_obj.params[k].tobytes()
    names = _random_names(rng, 100)
    ids, lengths = encode_batch(names, VOCAB, CFG.max_len)
    before = model_forward(ids, checkpoint_obj.params, CFG, lengths)
    after = model_forward(ids, back.params, back.config, lengths)
    assert before.tobytes() == after.tobytes()


def test_layout(tmp_path, checkpoint_obj):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    raw = path.read_bytes()
    assert raw[:4] == b"CSQ1"
    (n,) = struct.unpack("<Q", raw[4:12])
    manifest = json.loads(raw[12 : 12 + n])
    assert manifest["format_version"] == 1
    assert manifest["vocab"] == list(VOCAB.chars)
    blob = raw[12 + n :]
    assert sum(t["length"] for t in manifest["tensors"]) == len(blob)
    first = manifest["tensors"][0]
    assert first["name"] == "embedding" and first["offset"] == 0
    arr = np.frombuffer(blob[: first["length"]], dtype="<f4").reshape(first["shape"])
    assert np.array_equal(arr, checkpoint_obj.params["embedding"])
    params_only = [t for t in manifest["tensors"] if not t["name"].startswith("adam.")]
    assert sum(int(np.prod(t["shape"])) for t in params_only) == parameter_count(CFG)


def test_without_optimizer(tmp_path, checkpoint_obj):
    checkpoint_obj.optimizer = None
    ck.save(checkpoint_obj, tmp_path / "m.csq")
    assert ck.load(tmp_path / "m.csq").optimizer is None


def test_bad_magic(tmp_path):
    path = tmp_path / "x.csq"
    path.write_bytes(b"XXXX" + b"\0" * 20)
    with pytest.raises(ck.CheckpointError, match="not a checkpoint file"):
        ck.load(path)


def _rewrite_manifest(path, mutate):
    raw = path.read_bytes()
    (n,) = struct.unpack("<Q", raw[4:12])
    manifest = json.loads(raw[12 : 12 + n])
    mutate(manifest)
    head = json.dumps(manifest).encode()
    path.write_bytes(raw[:4] + struct.pack("<Q", len(head)) + head + raw[12 + n :])


def test_unsupported_version(tmp_path, checkpoint_obj):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    _rewrite_manifest(path, lambda m: m.update(format_version=2))
    with pytest.raises(ck.CheckpointError, match="unsupported checkpoint format version 2"):
        ck.load(path)


def test_truncated_blob(tmp_path, checkpoint_obj):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(ck.CheckpointError, match="tensor directory overrun"):
        ck.load(path)


def test_trailing_bytes(tmp_path, checkpoint_obj):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    path.write_bytes(path.read_bytes() + b"\0\0\0\0")
    with pytest.raises(ck.CheckpointError, match="trailing"):
        ck.load(path)


def test_shape_inconsistent_with_config(tmp_path, checkpoint_obj):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    _rewrite_manifest(path, lambda m: m["config"].update(embed_dim=5))
    with pytest.raises(ck.CheckpointError, match="shape"):
        ck.load(path)


def test_nan_in_tensor(tmp_path, checkpoint_obj):
    path = tmp_path / "m.csq"
    ck.save(checkpoint_obj, path)
    raw = bytearray(path.read_bytes())
    raw[-4:] = np.array([np.nan], dtype="<f4").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(ck.CheckpointError, match="non-finite"):
        ck.load(path)


def test_refuses_to_save_nan(tmp_path, checkpoint_obj):
    checkpoint_obj.params["conv.b"][0] = np.nan
    with pytest.raises(ck.CheckpointError, match="non-finite"):
        ck.save(checkpoint_obj, tmp_path / "m.csq")


def test_vocab_config_mismatch(tmp_path, checkpoint_obj):
    checkpoint_obj.vocab = Vocabulary(tuple("abc"))
    with pytest.raises(ck.CheckpointError, match="vocabulary"):
        ck.save(checkpoint_obj, tmp_path / "m.csq")


def test_predict_colors_survive_round_trip(tmp_path, checkpoint_obj, rng):
    ck.save(checkpoint_obj, tmp_path / "m.csq")
    back = ck.load(tmp_path / "m.csq")
    names = _random_names(rng, 100)
    a = predict_colors(checkpoint_obj.params, CFG, VOCAB, names)
    b = predict_colors(back.params, back.config, back.vocab, names)
    assert np.array_equal(a, b)
