import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chromaseq.color_data import (
    ColorRecord,
    DataError,
    Dataset,
    Origin,
    append_records,
    denormalize,
    format_hex,
    load_csv,
    normalize,
    parse_hex,
    save_csv,
    split,
)

from conftest import write_csv


@pytest.mark.parametrize(
    "text, rgb",
    [
        ("#FFFFFF", (255, 255, 255)),
        ("#000000", (0, 0, 0)),
        ("#C2B280", (194, 178, 128)),
        ("c2b280", (194, 178, 128)),
        ("#c2B280", (194, 178, 128)),
    ],
)
def test_parse_hex(text, rgb):
    assert parse_hex(text) == rgb


@pytest.mark.parametrize("bad", ["#12G4AB", "#12345", "#1234567", "", "##123456", "12 456"])
def test_parse_hex_rejects(bad):
    with pytest.raises(DataError, match="malformed hex"):
        parse_hex(bad)


def test_parse_hex_error_names_input():
    with pytest.raises(DataError, match="#12G4AB"):
        parse_hex("#12G4AB")


@given(st.tuples(*[st.integers(0, 255)] * 3))
def test_hex_round_trip(rgb):
    assert parse_hex(format_hex(rgb)) == rgb


def test_normalize_examples():
    assert normalize((255, 255, 255)) == (1.0, 1.0, 1.0)
    assert normalize((0, 0, 0)) == (0.0, 0.0, 0.0)
    assert normalize((128, 64, 32)) == (128 / 255, 64 / 255, 32 / 255)


@pytest.mark.parametrize("bad", [(256, 0, 0), (-1, 0, 0), (0.5, 0, 0)])
def test_normalize_rejects_out_of_range(bad):
    with pytest.raises(DataError):
        normalize(bad)


def test_denormalize_examples():
    assert denormalize((1.0, 0.0, 0.5)) == (255, 0, 128)
    assert denormalize((-0.1, 1.2, 0.5)) == (0, 255, 128)


def test_denormalize_round_trip_every_channel_value():
    for x in range(256):
        assert denormalize(normalize((x, x, x))) == (x, x, x)


def test_record_normalizes_name():
    rec = ColorRecord("  Deep Purple ", (1, 2, 3))
    assert rec.name == "deep purple"
    assert rec.origin is Origin.SEED


@pytest.mark.parametrize("rgb", [(256, 0, 0), (0, -1, 0), (1, 2), (1.5, 2, 3)])
def test_record_rejects_bad_rgb(rgb):
    with pytest.raises(DataError):
        ColorRecord("x", rgb)


def test_record_rejects_blank_name():
    with pytest.raises(DataError, match="empty"):
        ColorRecord("   ", (0, 0, 0))


def test_dataset_rejects_case_insensitive_duplicates():
    with pytest.raises(DataError, match="duplicate"):
        Dataset((ColorRecord("Red", (255, 0, 0)), ColorRecord("red ", (254, 0, 0))))


def test_load_csv_dedups_first_wins(tmp_path, caplog):
    path = write_csv(tmp_path / "c.csv", ["red,#FF0000", "Red,#FE0000"])
    ds = load_csv(path)
    assert len(ds) == 1
    assert ds[0].rgb == (255, 0, 0)
    assert "duplicate" in caplog.text


def test_load_csv_header_only(tmp_path):
    path = write_csv(tmp_path / "c.csv", [])
    with pytest.raises(DataError, match="zero valid rows"):
        load_csv(path)


def test_load_csv_missing_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("red,#FF0000\n", encoding="utf-8")
    with pytest.raises(DataError, match="header"):
        load_csv(path)


def test_load_csv_unreadable(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_csv(tmp_path / "missing.csv")


def test_load_csv_skips_malformed_rows(tmp_path):
    path = write_csv(tmp_path / "c.csv", ["red,#FF0000", "oops,#GG0000", ",#000000", "blue,0000ff"])
    assert load_csv(path).names == ["red", "blue"]


def test_load_csv_quoted_names(tmp_path):
    path = write_csv(tmp_path / "c.csv", ['"salt, pepper",#808080'])
    assert load_csv(path).names == ["salt, pepper"]


def test_load_csv_limit(colornames_path):
    assert len(load_csv(colornames_path, limit=50)) == 50


def test_load_meodai_corpus_matches_line_count(colornames_path):
    # independent count: physical lines minus the header (no name spans lines)
    with open(colornames_path, encoding="utf-8") as fh:
        n_lines = sum(1 for line in fh if line.strip())
    ds = load_csv(colornames_path)
    assert len(ds) == n_lines - 1 == 31881


def test_csv_round_trip_keeps_origin(tmp_path):
    ds = Dataset((ColorRecord("red", (255, 0, 0)), ColorRecord("dark red", (120, 0, 0), Origin.GENERATED)))
    save_csv(ds, tmp_path / "out.csv")
    text = (tmp_path / "out.csv").read_text(encoding="utf-8")
    assert text.splitlines()[0] == "name,hex,origin"
    back = load_csv(tmp_path / "out.csv")
    assert back.records == ds.records
    assert back.fingerprint() == ds.fingerprint()


def test_fingerprint_changes_with_content():
    a = Dataset((ColorRecord("red", (255, 0, 0)),))
    b = Dataset((ColorRecord("red", (254, 0, 0)),))
    assert a.fingerprint()["rows"] == 1
    assert a.fingerprint() != b.fingerprint()


def _dataset(n):
    return Dataset(tuple(ColorRecord(f"c{i}", (i % 256, 0, 0)) for i in range(n)))


@pytest.mark.parametrize("n, n_train, n_val", [(10, 8, 2), (30000, 24000, 6000), (7, 6, 1)])
def test_split_sizes(n, n_train, n_val):
    tr, va = split(_dataset(n), 0.2, seed=3)
    assert (len(tr), len(va)) == (n_train, n_val)


@given(n=st.integers(2, 300), frac=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
def test_split_partitions(n, frac, seed):
    ds = _dataset(n)
    tr, va = split(ds, frac, seed)
    assert len(va) == math.floor(frac * n)
    assert set(tr).isdisjoint(va)
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(n))
    tr2, va2 = split(ds, frac, seed)
    assert np.array_equal(tr, tr2) and np.array_equal(va, va2)


def test_split_errors():
    with pytest.raises(DataError):
        split(_dataset(1), 0.2, 0)
    with pytest.raises(DataError):
        split(_dataset(10), 1.0, 0)


def test_append_records_examples():
    ds = _dataset(6)
    fresh = [ColorRecord(f"new{i}", (0, 0, 0), Origin.GENERATED) for i in range(4)]
    out, n = append_records(ds, fresh)
    assert (len(out), n) == (10, 4)
    out2, n2 = append_records(out, [ColorRecord("C0", (9, 9, 9), Origin.GENERATED)])
    assert (len(out2), n2) == (10, 0)
    assert len(ds) == 6  # original untouched


@given(st.lists(st.sampled_from(["a", "b", "c", "A", "d ", "e", "c0", "C1"]), max_size=20))
def test_append_preserves_uniqueness(names):
    ds = _dataset(3)
    out, n = append_records(ds, [ColorRecord(x, (0, 0, 0), Origin.GENERATED) for x in names])
    assert len(out) == len(ds) + n
    assert len(set(out.names)) == len(out)
