"""Candidate color names from adjective x base-color cross products."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .color_data import DataError, Dataset, normalize_name

DEFAULT_COLORS = ("red", "orange", "yellow", "green", "blue", "purple")


@dataclass(frozen=True)
class AdjectiveList:
    adjectives: tuple[str, ...]

    def __post_init__(self):
        adj = tuple(self.adjectives)
        if not adj:
            raise DataError("adjective list is empty")
        if any(not a for a in adj):
            raise DataError("adjective list contains an empty entry")
        if len(set(adj)) != len(adj):
            raise DataError("adjective list contains duplicates")
        object.__setattr__(self, "adjectives", adj)

    def __len__(self) -> int:
        return len(self.adjectives)

    def __iter__(self):
        return iter(self.adjectives)

    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.adjectives).encode("utf-8")).hexdigest()

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "AdjectiveList":
        seen: dict[str, None] = {}
        for w in words:
            w = normalize_name(w)
            if w and not w.startswith("#"):
                seen.setdefault(w, None)
        return cls(tuple(seen))


def load_adjectives(path=None) -> AdjectiveList:
    """Read one word per line; ``#`` lines are comments. Defaults to the bundled list."""
    try:
        if path is None:
            text = resources.files("chromaseq.data").joinpath("adjectives.txt").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read adjectives from {path}: {exc}") from exc
    return AdjectiveList.from_words(text.splitlines())


def generate_names(adjectives: Iterable[str], colors: Sequence[str] = DEFAULT_COLORS) -> list[str]:
    """Every ``"<adjective> <color>"`` pair, adjective-major."""
    adjectives = list(adjectives)
    colors = [normalize_name(c) for c in colors]
    if not adjectives or not colors:
        raise DataError("need at least one adjective and one color")
    return [f"{a} {c}" for a in adjectives for c in colors]


def filter_fresh(names: Iterable[str], dataset: Dataset) -> list[str]:
    """Drop names already in ``dataset`` (case-insensitive), keeping input order."""
    return [n for n in names if n not in dataset]
