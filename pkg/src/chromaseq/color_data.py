"""Color-name dataset: ingestion, validation, normalization and splitting."""

from __future__ import annotations

import csv
import enum
import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_HEX_RE = re.compile(r"#?([0-9a-fA-F]{6})")


class DataError(ValueError):
    """Raised for malformed or unusable color data."""


class Origin(str, enum.Enum):
    SEED = "seed"
    GENERATED = "generated"


def normalize_name(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class ColorRecord:
    """A single (name, rgb) example. Names are stored trimmed and lowercased."""

    name: str
    rgb: tuple[int, int, int]
    origin: Origin = Origin.SEED

    def __post_init__(self):
        name = normalize_name(self.name)
        if not name:
            raise DataError("color name is empty after trimming")
        rgb = tuple(self.rgb)
        if len(rgb) != 3:
            raise DataError(f"rgb must have 3 channels, got {len(rgb)}")
        for ch in rgb:
            if isinstance(ch, bool) or not isinstance(ch, (int, np.integer)) or not 0 <= ch <= 255:
                raise DataError(f"channel {ch!r} of {name!r} is not an integer in [0, 255]")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "rgb", tuple(int(c) for c in rgb))
        object.__setattr__(self, "origin", Origin(self.origin))

    @property
    def hex(self) -> str:
        return format_hex(self.rgb)


@dataclass(frozen=True)
class Dataset:
    """Ordered, name-unique collection of records. Treated as immutable."""

    records: tuple[ColorRecord, ...]
    split_seed: int = 0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        index = {}
        for i, rec in enumerate(records):
            if rec.name in index:
                raise DataError(f"duplicate color name {rec.name!r}")
            index[rec.name] = i
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i) -> ColorRecord:
        return self.records[i]

    def __contains__(self, name: str) -> bool:
        return normalize_name(name) in self._index

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def targets(self, indices: Sequence[int] | None = None, dtype=np.float64) -> np.ndarray:
        """Normalized (N, 3) target matrix, optionally restricted to ``indices``."""
        recs = self.records if indices is None else [self.records[i] for i in indices]
        arr = np.array([r.rgb for r in recs], dtype=np.float64).reshape(-1, 3) / 255.0
        return arr.astype(dtype)

    def indices_of(self, origin: Origin) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.origin == origin]

    def fingerprint(self) -> dict:
        """Row count plus a SHA-256 over the canonical CSV rows."""
        h = hashlib.sha256()
        for r in self.records:
            h.update(f"{r.name},{r.hex},{r.origin.value}\n".encode("utf-8"))
        return {"rows": len(self.records), "sha256": h.hexdigest()}


def parse_hex(hex_string: str) -> tuple[int, int, int]:
    """Decode ``#RRGGBB`` (hash optional, any case) into three 8-bit channels."""
    m = _HEX_RE.fullmatch(hex_string.strip()) if isinstance(hex_string, str) else None
    if m is None:
        raise DataError(f"malformed hex color {hex_string!r}")
    digits = m.group(1)
    return tuple(int(digits[i : i + 2], 16) for i in (0, 2, 4))


def format_hex(rgb: Sequence[int]) -> str:
    return "#" + "".join(f"{int(c):02X}" for c in rgb)


def normalize(rgb: Sequence[int]) -> tuple[float, float, float]:
    for ch in rgb:
        if not 0 <= ch <= 255 or ch != int(ch):
            raise DataError(f"channel {ch!r} is not an integer in [0, 255]")
    return tuple(int(c) / 255.0 for c in rgb)


def denormalize(rgb01: Sequence[float]) -> tuple[int, int, int]:
    """Clamp to [0, 1], scale by 255 and round half up."""
    out = []
    for v in rgb01:
        v = min(max(float(v), 0.0), 1.0)
        out.append(int(math.floor(v * 255.0 + 0.5)))
    return tuple(out)


def denormalize_array(rgb01: np.ndarray) -> np.ndarray:
    """Vectorized :func:`denormalize` over an (..., 3) array."""
    v = np.clip(np.asarray(rgb01, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.int64)


def _read_rows(path: Path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = [h.strip().lower() for h in (reader.fieldnames or [])]
            if "name" not in header or "hex" not in header:
                raise DataError(f"{path}: missing 'name,hex' header")
            reader.fieldnames = header
            return list(reader)
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_csv(path, limit: int | None = None, split_seed: int = 0) -> Dataset:
    """Load a ``name,hex[,origin]`` CSV.

    Rows without an ``origin`` column are seed records. Later duplicates of a
    name are dropped with a warning; malformed rows are skipped with a warning.
    ``limit`` keeps only the first ``limit`` valid records.
    """
    path = Path(path)
    records: list[ColorRecord] = []
    seen: set[str] = set()
    dropped = 0
    for lineno, row in enumerate(_read_rows(path), start=2):
        try:
            origin = Origin((row.get("origin") or "seed").strip().lower())
            rec = ColorRecord(row.get("name") or "", parse_hex(row.get("hex") or ""), origin)
        except (DataError, ValueError) as exc:
            logger.warning("%s:%d: skipping row: %s", path, lineno, exc)
            continue
        if rec.name in seen:
            dropped += 1
            logger.warning("%s:%d: duplicate name %r dropped", path, lineno, rec.name)
            continue
        seen.add(rec.name)
        records.append(rec)
        if limit is not None and len(records) >= limit:
            break
    if not records:
        raise DataError(f"{path}: zero valid rows")
    if dropped:
        logger.info("%s: dropped %d duplicate names", path, dropped)
    return Dataset(tuple(records), split_seed)


def save_csv(dataset: Dataset, path) -> None:
    """Write ``name,hex,origin`` rows."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "hex", "origin"])
        for r in dataset.records:
            writer.writerow([r.name, r.hex, r.origin.value])


def split(dataset: Dataset, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled train/validation partition.

    The validation set holds ``floor(val_fraction * N)`` indices.
    """
    n = len(dataset)
    if not 0.0 < val_fraction < 1.0:
        raise DataError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if n < 2:
        raise DataError(f"cannot split a dataset of {n} record(s)")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(math.floor(val_fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def append_records(dataset: Dataset, new: Iterable[ColorRecord]) -> tuple[Dataset, int]:
    """Append records whose names are not yet present.

    Returns the updated dataset and the number of records appended.
    """
    records = list(dataset.records)
    seen = set(dataset._index)
    appended = 0
    for rec in new:
        if rec.name in seen:
            logger.debug("skipping existing name %r", rec.name)
            continue
        seen.add(rec.name)
        records.append(rec)
        appended += 1
    return Dataset(tuple(records), dataset.split_seed), appended
