from pathlib import Path

import numpy as np
import pytest

from chromaseq.color_data import ColorRecord, Dataset, load_csv
from chromaseq.nn.model import ModelConfig
from chromaseq.text_codec import build_vocab, max_len_for

ROOT = Path(__file__).resolve().parents[1]
COLORNAMES = ROOT / "data" / "colornames.csv"


@pytest.fixture(scope="session")
def colornames_path():
    return COLORNAMES


def clear_dominant(records, n):
    """First ``n`` records whose top channel beats the runner-up by >= 40."""
    out = []
    for r in records:
        top, second = sorted(r.rgb)[::-1][:2]
        if top - second >= 40:
            out.append(r)
        if len(out) == n:
            break
    return out


@pytest.fixture(scope="session")
def toy_dataset():
    return Dataset(tuple(clear_dominant(load_csv(COLORNAMES, limit=400), 16)))


@pytest.fixture(scope="session")
def small_dataset():
    return load_csv(COLORNAMES, limit=120)


def tiny_config(dataset, **kw):
    base = dict(
        vocab_size=build_vocab(dataset).size, max_len=max_len_for(dataset),
        embed_dim=8, conv_filters=16, conv_kernel=3, lstm_hidden=16, dense_dims=(16,),
    )
    base.update(kw)
    return ModelConfig(**base)


def write_csv(path, rows, header="name,hex"):
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_record():
    def make(name, rgb=(1, 2, 3), origin="seed"):
        return ColorRecord(name, rgb, origin)
    return make


# criterion number -> one-line verdict, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
