"""Phone-vector export and the tools that consume the vectors.

* QVEC-style alignment of embedding dimensions to binary phonological properties
* nearest-neighbour and top-coefficient inspection
* cosine-distance substitution tables and a weighted edit distance over them
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .model import PolyglotModel


class VectorFileError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    symbols: tuple[str, ...]
    values: np.ndarray  # (n, d)

    def __post_init__(self) -> None:
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate row symbols")
        if self.values.ndim != 2 or self.values.shape[0] != len(self.symbols):
            raise ValueError(f"{len(self.symbols)} symbols for a matrix of shape {self.values.shape}")
        object.__setattr__(self, "_row", {s: i for i, s in enumerate(self.symbols)})

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._row

    def vector(self, symbol: str) -> np.ndarray:
        try:
            return self.values[self._row[symbol]]
        except KeyError:
            raise KeyError(f"phone {symbol!r} has no vector") from None


@dataclass(frozen=True)
class LinguisticMatrix:
    symbols: tuple[str, ...]
    properties: tuple[str, ...]
    values: np.ndarray  # (n, p) of 0/1

    def __post_init__(self) -> None:
        if len(set(self.properties)) != len(self.properties):
            raise ValueError("duplicate property names")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate row symbols")
        if self.values.shape != (len(self.symbols), len(self.properties)):
            raise ValueError(f"matrix shape {self.values.shape} does not match labels")
        if not np.all((self.values == 0) | (self.values == 1)):
            raise ValueError("linguistic matrix entries must be 0 or 1")


# ---------------------------------------------------------------------------
# file formats: "symbol<TAB>v1 v2 ..." ; linguistic files add a "#<TAB>names" header
# ---------------------------------------------------------------------------


def export_vectors(model: PolyglotModel, include_special: bool = False) -> EmbeddingMatrix:
    """Columns of the phone lookup table as rows, in vocabulary order."""
    X = model.params["X"]
    n = len(model.vocab) if include_special else len(model.vocab.phones)
    return EmbeddingMatrix(model.vocab.symbols[:n], X[:, :n].T.copy())


def format_vectors(emb: EmbeddingMatrix) -> str:
    return "".join(
        f"{s}\t{' '.join(f'{v:.17g}' for v in row)}\n" for s, row in zip(emb.symbols, emb.values)
    )


def save_vectors(emb: EmbeddingMatrix, path: str | Path) -> None:
    Path(path).write_text(format_vectors(emb), encoding="utf-8", newline="\n")


def _read_rows(lines: Iterable[str], source: str) -> tuple[list[str], list[list[float]], list[str] | None]:
    header = None
    symbols, rows = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            if header is None and not symbols and "\t" in line:
                header = line.split("\t", 1)[1].split()
            continue
        sym, tab, rest = line.partition("\t")
        if not tab:
            raise VectorFileError(f"{source}:{lineno}: expected 'symbol<TAB>values'")
        try:
            values = [float(v) for v in rest.split()]
        except ValueError as exc:
            raise VectorFileError(f"{source}:{lineno}: {exc}") from None
        if rows and len(values) != len(rows[0]):
            raise VectorFileError(f"{source}:{lineno}: {len(values)} values, expected {len(rows[0])}")
        symbols.append(sym)
        rows.append(values)
    if not rows:
        raise VectorFileError(f"{source}: no rows")
    return symbols, rows, header


def parse_vectors(lines: Iterable[str], source: str = "<string>") -> EmbeddingMatrix:
    symbols, rows, _ = _read_rows(lines, source)
    return EmbeddingMatrix(tuple(symbols), np.array(rows, dtype=np.float64))


def load_vectors(path: str | Path) -> EmbeddingMatrix:
    with Path(path).open(encoding="utf-8") as fh:
        return parse_vectors(fh, str(path))


def parse_linguistic(lines: Iterable[str], source: str = "<string>") -> LinguisticMatrix:
    symbols, rows, header = _read_rows(lines, source)
    values = np.array(rows, dtype=np.float64)
    if header is None:
        raise VectorFileError(f"{source}: missing '#<TAB>property names' header")
    if len(header) != values.shape[1]:
        raise VectorFileError(f"{source}: header names {len(header)} properties, rows have {values.shape[1]}")
    try:
        return LinguisticMatrix(tuple(symbols), tuple(header), values)
    except ValueError as exc:
        raise VectorFileError(f"{source}: {exc}") from None


def load_linguistic(path: str | Path) -> LinguisticMatrix:
    with Path(path).open(encoding="utf-8") as fh:
        return parse_linguistic(fh, str(path))


def format_linguistic(ling: LinguisticMatrix) -> str:
    head = "#properties\t" + " ".join(ling.properties) + "\n"
    body = "".join(
        f"{s}\t{' '.join(str(int(v)) for v in row)}\n" for s, row in zip(ling.symbols, ling.values)
    )
    return head + body


# ---------------------------------------------------------------------------
# distances and inspection
# ---------------------------------------------------------------------------


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """``1 - cos(u, v)`` in [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    uu, vv = float(np.dot(u, u)), float(np.dot(v, v))
    if uu == 0.0 or vv == 0.0:
        raise ValueError("cosine distance is undefined for a zero vector")
    # sqrt(uu * vv) rather than |u| |v| keeps d(v, v) exactly zero
    cos = float(np.dot(u, v)) / math.sqrt(uu * vv)
    return min(2.0, max(0.0, 1.0 - cos))


@dataclass(frozen=True)
class SubstitutionTable:
    sources: tuple[str, ...]
    targets: tuple[str, ...]
    costs: np.ndarray  # (len(sources), len(targets))

    def __post_init__(self) -> None:
        object.__setattr__(self, "_src", {s: i for i, s in enumerate(self.sources)})
        object.__setattr__(self, "_tgt", {s: i for i, s in enumerate(self.targets)})

    def cost(self, source: str, target: str) -> float:
        try:
            return float(self.costs[self._src[source], self._tgt[target]])
        except KeyError as exc:
            raise KeyError(f"phone {exc.args[0]!r} is not in the substitution table") from None

    def has_source(self, phone: str) -> bool:
        return phone in self._src

    def has_target(self, phone: str) -> bool:
        return phone in self._tgt

    def to_tsv(self) -> str:
        lines = ["\t" + "\t".join(self.targets)]
        for s, row in zip(self.sources, self.costs):
            lines.append(s + "\t" + "\t".join(f"{c:.17g}" for c in row))
        return "\n".join(lines) + "\n"


def substitution_table(
    emb: EmbeddingMatrix, sources: Sequence[str] | None = None, targets: Sequence[str] | None = None
) -> SubstitutionTable:
    sources = tuple(emb.symbols if sources is None else sources)
    targets = tuple(sources if targets is None else targets)
    for p in (*sources, *targets):
        if p not in emb:
            raise KeyError(f"phone {p!r} has no vector")
    costs = np.array([[cosine_distance(emb.vector(s), emb.vector(t)) for t in targets] for s in sources])
    return SubstitutionTable(sources, targets, costs.reshape(len(sources), len(targets)))


def nearest_phones(emb: EmbeddingMatrix, phone: str, n: int = 5) -> list[tuple[str, float]]:
    """The ``n`` closest other phones by cosine distance, ties broken by symbol."""
    if n < 1:
        raise ValueError("n must be at least 1")
    q = emb.vector(phone)
    scored = [(cosine_distance(q, emb.vector(s)), s) for s in emb.symbols if s != phone]
    scored.sort()
    return [(s, d) for d, s in scored[:n]]


def top_phones(emb: EmbeddingMatrix, dimension: int, n: int = 10) -> list[str]:
    """Phones with the largest coefficients in one embedding column, ties broken by symbol."""
    if not 0 <= dimension < emb.dim:
        raise IndexError(f"dimension {dimension} out of range for {emb.dim}-dimensional vectors")
    col = emb.values[:, dimension]
    order = sorted(range(len(emb)), key=lambda i: (-col[i], emb.symbols[i]))
    return [emb.symbols[i] for i in order[:n]]


# ---------------------------------------------------------------------------
# QVEC-style alignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyAlignment:
    property: str
    dimension: int
    correlation: float
    constant: bool = False


@dataclass
class AlignmentResult:
    alignments: list[PropertyAlignment]
    phones: tuple[str, ...] = field(default=())

    @property
    def score(self) -> float:
        return float(sum(a.correlation for a in self.alignments))

    @property
    def mean_correlation(self) -> float:
        return self.score / len(self.alignments) if self.alignments else 0.0

    def mapping(self) -> dict[str, int]:
        return {a.property: a.dimension for a in self.alignments}

    def to_json(self) -> str:
        data = {
            "score": self.score,
            "num_phones": len(self.phones),
            "alignments": {
                a.property: {"dimension": a.dimension, "correlation": a.correlation, "constant": a.constant}
                for a in self.alignments
            },
        }
        return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def qvec_align(emb: EmbeddingMatrix, ling: LinguisticMatrix) -> AlignmentResult:
    """Align each linguistic property to its maximally correlated embedding dimension."""
    shared = [s for s in ling.symbols if s in emb]
    if len(shared) < 2:
        raise ValueError(f"need at least 2 shared phones, found {len(shared)}")
    row = {s: i for i, s in enumerate(ling.symbols)}
    L = ling.values[[row[s] for s in shared]]
    E = np.stack([emb.vector(s) for s in shared])
    corr = np.empty((L.shape[1], E.shape[1]))
    for j in range(L.shape[1]):
        for i in range(E.shape[1]):
            corr[j, i] = _pearson(L[:, j], E[:, i])
    constant = np.ptp(L, axis=0) == 0
    out = []
    for j, name in enumerate(ling.properties):
        if constant[j]:
            out.append(PropertyAlignment(name, 0, 0.0, True))
            continue
        i = int(np.argmax(corr[j]))
        out.append(PropertyAlignment(name, i, float(corr[j, i])))
    return AlignmentResult(out, tuple(shared))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    aa = float(np.dot(ac, ac))
    bb = float(np.dot(bc, bc))
    if aa == 0.0 or bb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(ac, bc)) / math.sqrt(aa * bb)))


# ---------------------------------------------------------------------------
# weighted edit distance
# ---------------------------------------------------------------------------


class Edit(NamedTuple):
    op: str  # "sub", "del" or "ins"
    source_pos: int | None
    target_pos: int | None
    source_phone: str | None
    target_phone: str | None
    cost: float


def adapt_score(
    source: Sequence[str],
    candidate: Sequence[str],
    table: SubstitutionTable,
    indel: float = 1.0,
) -> tuple[float, list[Edit]]:
    """Minimum-cost edit of ``source`` into ``candidate`` and one optimal edit trace.

    Substitutions cost ``table.cost(a, b)`` (0 when ``a == b``); insertions and
    deletions cost ``indel``. Identity matches are not listed in the trace. On
    ties the trace prefers substitution, then deletion, then insertion, walking
    back from the end of both sequences.
    """
    if not indel > 0:
        raise ValueError("indel cost must be positive")
    for p in source:
        if not table.has_source(p):
            raise KeyError(f"source phone {p!r} is not in the substitution table")
    for p in candidate:
        if not table.has_target(p):
            raise KeyError(f"candidate phone {p!r} is not in the substitution table")
    m, n = len(source), len(candidate)

    def sub_cost(i: int, j: int) -> float:
        a, b = source[i], candidate[j]
        return 0.0 if a == b else table.cost(a, b)

    D = [[0.0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        D[i][0] = D[i - 1][0] + indel
    for j in range(1, n + 1):
        D[0][j] = D[0][j - 1] + indel
    for i in range(1, m + 1):
        Di, Dp = D[i], D[i - 1]
        for j in range(1, n + 1):
            Di[j] = min(Dp[j - 1] + sub_cost(i - 1, j - 1), Dp[j] + indel, Di[j - 1] + indel)

    trace: list[Edit] = []
    i, j = m, n
    while i or j:
        if i and j:
            c = sub_cost(i - 1, j - 1)
            if D[i][j] == D[i - 1][j - 1] + c:
                if source[i - 1] != candidate[j - 1]:
                    trace.append(Edit("sub", i - 1, j - 1, source[i - 1], candidate[j - 1], c))
                i, j = i - 1, j - 1
                continue
        if i and D[i][j] == D[i - 1][j] + indel:
            trace.append(Edit("del", i - 1, None, source[i - 1], None, indel))
            i -= 1
            continue
        trace.append(Edit("ins", None, j - 1, None, candidate[j - 1], indel))
        j -= 1
    trace.reverse()
    return D[m][n], trace
