import pytest
from hypothesis import given
from hypothesis import strategies as st

from chromaseq.color_data import ColorRecord, Dataset, load_csv
from chromaseq.text_codec import PAD, UNK, Vocabulary, build_vocab, encode, encode_batch, max_len_for


def _ds(*names):
    return Dataset(tuple(ColorRecord(n, (0, 0, 0)) for n in names))


def test_build_vocab_red():
    v = build_vocab(_ds("red"))
    assert v.size == 5
    assert v.symbol_to_id == {"d": 2, "e": 3, "r": 4}


def test_build_vocab_order_independent():
    assert build_vocab(_ds("a", "b")) == build_vocab(_ds("b", "a"))


def test_build_vocab_meodai(colornames_path):
    ds = load_csv(colornames_path)
    charset = set()
    for line in colornames_path.read_text(encoding="utf-8").splitlines()[1:]:
        name = line.rsplit(",", 1)[0].strip().strip('"').lower()
        charset.update(name)
    assert build_vocab(ds).size == len(charset) + 2


def test_encode_pads():
    v = build_vocab(_ds("red"))
    seq = encode("red", v, 5)
    assert seq.ids == (4, 3, 2, PAD, PAD)
    assert seq.true_length == 3


def test_encode_exact_length():
    v = build_vocab(_ds("red"))
    seq = encode("Red", v, 3)
    assert seq.ids == (4, 3, 2) and seq.true_length == 3


def test_encode_truncates():
    v = build_vocab(_ds("red"))
    seq = encode("redder", v, 4)
    assert seq.true_length == 4 and v.decode(seq.ids) == "redd"


def test_encode_unknown_char():
    v = build_vocab(_ds("cafe"))
    seq = encode("café", v, 6)
    assert seq.ids[3] == UNK
    assert seq.ids[4:] == (PAD, PAD)


@pytest.mark.parametrize("bad", ["", "   "])
def test_encode_rejects_empty(bad):
    with pytest.raises(ValueError):
        encode(bad, build_vocab(_ds("a")), 4)


def test_max_len_for():
    assert max_len_for(_ds("red", "green")) == 5
    assert max_len_for(_ds("x" * 60)) == 40
    assert max_len_for(_ds("a")) == 1


@given(st.text(min_size=1, max_size=60), st.integers(1, 50))
def test_encode_padding_invariant(name, max_len):
    v = Vocabulary(tuple("abcdefghij "))
    if not name.strip():
        with pytest.raises(ValueError):
            encode(name, v, max_len)
        return
    seq = encode(name, v, max_len)
    assert len(seq.ids) == max_len
    assert 1 <= seq.true_length <= max_len
    assert all(i == PAD for i in seq.ids[seq.true_length:])
    assert all(i != PAD for i in seq.ids[: seq.true_length])
    assert encode(name, v, max_len) == seq


@given(st.text(alphabet="abcdefghij ", min_size=1, max_size=30))
def test_decode_recovers_known_names(name):
    v = Vocabulary(tuple("abcdefghij "))
    text = name.strip().lower()
    if not text:
        return
    assert v.decode(encode(name, v, 30).ids) == text


def test_encode_batch_shapes():
    v = build_vocab(_ds("red", "blue"))
    ids, lengths = encode_batch(["red", "blue"], v, 6)
    assert ids.shape == (2, 6) and lengths.tolist() == [3, 4]
