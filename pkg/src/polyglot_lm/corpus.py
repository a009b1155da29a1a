"""Pronunciation dictionaries, the shared multilingual vocabulary, splits and batches."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
LANG_PREFIX = "φ_"


class DictionaryError(ValueError):
    """Malformed pronunciation dictionary."""


class UnknownPhoneError(KeyError):
    pass


@dataclass(frozen=True)
class Entry:
    language: str
    word: str
    phones: tuple[str, ...]

    @property
    def symbols(self) -> tuple[str, ...]:
        """The phone sequence wrapped in sentence boundary symbols."""
        return (BOS, *self.phones, EOS)


@dataclass
class Corpus:
    entries: list[Entry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __add__(self, other: "Corpus") -> "Corpus":
        return Corpus(self.entries + other.entries)

    @property
    def languages(self) -> list[str]:
        return sorted({e.language for e in self.entries})

    @property
    def num_tokens(self) -> int:
        """Symbols including the two boundary controls per entry."""
        return sum(len(e.phones) + 2 for e in self.entries)

    def phone_set(self) -> set[str]:
        return {p for e in self.entries for p in e.phones}

    @classmethod
    def concat(cls, corpora: Iterable["Corpus"]) -> "Corpus":
        entries: list[Entry] = []
        for c in corpora:
            entries.extend(c.entries)
        return cls(entries)


def parse_dictionary(lines: Iterable[str], language: str, source: str = "<string>") -> Corpus:
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise DictionaryError(f"{source}:{lineno}: expected 'word<TAB>phones'")
        word, _, phone_field = line.partition("\t")
        phones = tuple(phone_field.split())
        if not word.strip():
            raise DictionaryError(f"{source}:{lineno}: empty word field")
        if not phones:
            raise DictionaryError(f"{source}:{lineno}: empty phone field")
        entries.append(Entry(language, word, phones))
    if not entries:
        raise DictionaryError(f"{source}: no dictionary entries")
    return Corpus(entries)


def load_dictionary(path: str | Path, language: str) -> Corpus:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_dictionary(fh, language, source=str(path))


def format_dictionary(corpus: Corpus) -> str:
    return "".join(f"{e.word}\t{' '.join(e.phones)}\n" for e in corpus.entries)


def save_dictionary(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(format_dictionary(corpus), encoding="utf-8", newline="\n")


@dataclass(frozen=True)
class Vocab:
    """Phones, language symbols and control symbols with a dense index.

    Order: phones (sorted), language symbols (sorted), then ``<s>``, ``</s>``
    and optionally ``<unk>``.
    """

    phones: tuple[str, ...]
    languages: tuple[str, ...]
    with_unk: bool = False

    def __post_init__(self) -> None:
        symbols = self.symbols
        if len(set(symbols)) != len(symbols):
            raise ValueError("vocabulary symbols collide")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    @property
    def controls(self) -> tuple[str, ...]:
        return (BOS, EOS, UNK) if self.with_unk else (BOS, EOS)

    @property
    def language_symbols(self) -> tuple[str, ...]:
        return tuple(LANG_PREFIX + lang for lang in self.languages)

    @property
    def symbols(self) -> tuple[str, ...]:
        return self.phones + self.language_symbols + self.controls

    def __len__(self) -> int:
        return len(self.phones) + len(self.languages) + len(self.controls)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def symbol(self, i: int) -> str:
        return self.symbols[i]

    def language_index(self, language: str) -> int:
        try:
            return self.languages.index(language)
        except ValueError:
            raise KeyError(f"unknown language {language!r}; known: {', '.join(self.languages)}") from None

    @property
    def bos(self) -> int:
        return self._index[BOS]

    @property
    def eos(self) -> int:
        return self._index[EOS]

    def is_phone(self, i: int) -> bool:
        return i < len(self.phones)

    def encode(self, symbols: Sequence[str], allow_unk: bool = False) -> np.ndarray:
        out = np.empty(len(symbols), dtype=np.int64)
        for j, s in enumerate(symbols):
            i = self._index.get(s)
            if i is None or (s.startswith(LANG_PREFIX) and s not in self.phones):
                if allow_unk and self.with_unk:
                    i = self._index[UNK]
                else:
                    hint = "" if allow_unk else " (use allow-unk mode to map it to <unk>)"
                    raise UnknownPhoneError(f"phone {s!r} is not in the vocabulary{hint}")
            out[j] = i
        return out


def build_vocab(corpora: Sequence[Corpus], with_unk: bool = False) -> Vocab:
    if not corpora:
        raise ValueError("build_vocab needs at least one corpus")
    phones: set[str] = set()
    languages: set[str] = set()
    for c in corpora:
        phones |= c.phone_set()
        languages |= {e.language for e in c.entries}
    return Vocab(tuple(sorted(phones)), tuple(sorted(languages)), with_unk)


def split(
    corpus: Corpus, dev: float = 0.15, test: float = 0.10, seed: int = 0
) -> tuple[Corpus, Corpus, Corpus]:
    """Shuffle deterministically and cut into (train, dev, test).

    Dev and test sizes are ``ceil(fraction * n)`` so that rounding favours the
    held-out sets; the remainder is training data.
    """
    if not (0 <= dev < 1 and 0 <= test < 1 and dev + test < 1):
        raise ValueError(f"invalid split fractions dev={dev}, test={test}")
    n = len(corpus)
    if n < 3:
        raise ValueError(f"corpus of {n} entries is too small to split")
    n_dev = _held_out_size(dev, n)
    n_test = _held_out_size(test, n)
    if n_dev + n_test >= n:
        raise ValueError(f"split leaves no training data ({n_dev} dev + {n_test} test of {n})")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    entries = [corpus.entries[i] for i in order]
    dev_part = entries[:n_dev]
    test_part = entries[n_dev : n_dev + n_test]
    train_part = entries[n_dev + n_test :]
    return Corpus(train_part), Corpus(dev_part), Corpus(test_part)


def _held_out_size(fraction: float, n: int) -> int:
    # round() guards against 0.15 * 100 == 15.000000000000002
    return int(np.ceil(round(fraction * n, 9)))


@dataclass
class Batch:
    """Padded, masked prediction windows for a group of sequences.

    ``contexts[b, t]`` holds the ``k`` symbols preceding target ``targets[b, t]``
    (oldest first, left-padded with ``<s>``).
    """

    contexts: np.ndarray  # (B, T, k) int
    targets: np.ndarray  # (B, T) int
    mask: np.ndarray  # (B, T) float, 1 for real targets
    languages: list[str]
    k: int
    vocab_size: int

    @property
    def size(self) -> int:
        return self.targets.shape[0]

    @property
    def num_targets(self) -> int:
        return int(self.mask.sum())


def context_windows(ids: np.ndarray, k: int, bos: int) -> tuple[np.ndarray, np.ndarray]:
    """(contexts, targets) for a wrapped index sequence: one window per position t >= 1."""
    padded = np.concatenate([np.full(k - 1, bos, dtype=np.int64), ids])
    n = len(ids) - 1
    contexts = np.stack([padded[t : t + k] for t in range(n)]) if n else np.zeros((0, k), np.int64)
    return contexts, ids[1:]


def encode_batch(entries: Sequence[Entry], vocab: Vocab, k: int, allow_unk: bool = False) -> Batch:
    if k < 1:
        raise ValueError("context width must be at least 1")
    encoded = [vocab.encode(e.symbols, allow_unk) for e in entries]
    T = max(len(ids) - 1 for ids in encoded)
    B = len(entries)
    contexts = np.full((B, T, k), vocab.bos, dtype=np.int64)
    targets = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=np.float64)
    for b, ids in enumerate(encoded):
        ctx, tgt = context_windows(ids, k, vocab.bos)
        n = len(tgt)
        contexts[b, :n] = ctx
        targets[b, :n] = tgt
        mask[b, :n] = 1.0
    return Batch(contexts, targets, mask, [e.language for e in entries], k, len(vocab))


def make_batches(
    corpus: Corpus,
    vocab: Vocab,
    batch_size: int,
    k: int,
    seed: int | None = 0,
    allow_unk: bool = False,
) -> list[Batch]:
    """Shuffle (unless ``seed`` is None) and group into padded batches."""
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    entries = list(corpus.entries)
    if seed is not None:
        random.Random(seed).shuffle(entries)
    return [
        encode_batch(entries[i : i + batch_size], vocab, k, allow_unk)
        for i in range(0, len(entries), batch_size)
    ]
