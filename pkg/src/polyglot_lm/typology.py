"""Per-language binary typological feature vectors."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_NUM_FEATURES = 190


class TypologyError(ValueError):
    pass


@dataclass(frozen=True)
class TypologyTable:
    feature_names: tuple[str, ...]
    rows: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        F = len(self.feature_names)
        if len(set(self.feature_names)) != F:
            raise TypologyError("duplicate feature names")
        frozen = {}
        for lang, row in self.rows.items():
            arr = np.array(row, dtype=np.float64)
            if arr.shape != (F,):
                raise TypologyError(f"language {lang!r}: expected {F} features, got {arr.shape}")
            if not np.all((arr == 0.0) | (arr == 1.0)):
                raise TypologyError(f"language {lang!r}: features must be 0 or 1")
            arr.setflags(write=False)
            frozen[lang] = arr
        object.__setattr__(self, "rows", frozen)

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    @property
    def languages(self) -> list[str]:
        return list(self.rows)

    def __contains__(self, language: str) -> bool:
        return language in self.rows


def features_for(table: TypologyTable, language: str) -> np.ndarray:
    """The stored read-only 0.0/1.0 vector for ``language``."""
    try:
        return table.rows[language]
    except KeyError:
        known = ", ".join(sorted(table.rows)) or "(none)"
        raise KeyError(f"no typology row for language {language!r}; known: {known}") from None


def parse_typology(lines: Sequence[str], source: str = "<string>") -> TypologyTable:
    lines = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise TypologyError(f"{source}: empty typology file")
    delimiter = "\t" if "\t" in lines[0] else ","
    reader = csv.reader(lines, delimiter=delimiter)
    header = next(reader)
    names = tuple(h.strip() for h in header[1:])
    if not names:
        raise TypologyError(f"{source}: header row lists no features")
    rows: dict[str, np.ndarray] = {}
    for rowno, cells in enumerate(reader, start=2):
        cells = [c.strip() for c in cells]
        lang, values = cells[0], cells[1:]
        if len(values) != len(names):
            raise TypologyError(f"{source}: row {rowno}: {len(values)} values for {len(names)} features")
        if lang in rows:
            raise TypologyError(f"{source}: row {rowno}: duplicate language {lang!r}")
        bad = [v for v in values if v not in ("0", "1")]
        if bad:
            raise TypologyError(f"{source}: row {rowno}: non-binary value {bad[0]!r}")
        rows[lang] = np.array([float(v) for v in values])
    return TypologyTable(names, rows)


def load_typology(path: str | Path) -> TypologyTable:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        return parse_typology(fh.read().splitlines(), source=str(path))


def format_typology(table: TypologyTable, delimiter: str = "\t") -> str:
    out = [delimiter.join(("language", *table.feature_names))]
    for lang, row in table.rows.items():
        out.append(delimiter.join((lang, *(str(int(v)) for v in row))))
    return "\n".join(out) + "\n"


def from_bits(feature_names: Iterable[str], rows: Mapping[str, Iterable[int]]) -> TypologyTable:
    return TypologyTable(tuple(feature_names), {k: np.asarray(list(v), float) for k, v in rows.items()})
