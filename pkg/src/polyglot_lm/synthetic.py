"""Synthetic rule-based phone languages for controlled experiments.

Each language draws words from a shared filler inventory and plants a trigger
phone whose successor is fixed by a per-language rule. The positions right
after the trigger are the only places where languages disagree.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Entry
from .typology import TypologyTable

FILLER = ("a", "e", "i", "o", "u", "p", "t", "k", "m", "n", "s", "l")
TRIGGER = "x"


@dataclass(frozen=True)
class RuleLanguage:
    name: str
    successor: str
    num_words: int


def rule_words(
    lang: RuleLanguage,
    seed: int,
    min_len: int = 2,
    max_len: int = 6,
    filler: Sequence[str] = FILLER,
    pairs: tuple[int, int] = (1, 2),
) -> Corpus:
    """Words of filler phones with ``pairs`` (inclusive range) ``TRIGGER successor`` pairs planted."""
    rng = random.Random(f"{lang.name}:{seed}")
    entries = []
    for i in range(lang.num_words):
        phones = [rng.choice(filler) for _ in range(rng.randint(min_len, max_len))]
        for _ in range(rng.randint(*pairs)):
            pos = rng.randint(0, len(phones))
            phones[pos:pos] = [TRIGGER, lang.successor]
        entries.append(Entry(lang.name, f"{lang.name.lower()}{i}", tuple(phones)))
    return Corpus(entries)


def two_rule_languages(num_words: int = 500, seed: int = 0) -> Corpus:
    """Language A maps x→y, language B maps x→z."""
    return Corpus.concat(
        rule_words(RuleLanguage(name, succ, num_words), seed)
        for name, succ in (("A", "y"), ("B", "z"))
    )


def typology_rule_languages(
    sizes: Mapping[str, int], seed: int = 0, num_features: int = 7, **word_kw
) -> tuple[Corpus, TypologyTable, dict[str, str]]:
    """Languages whose trigger successor is ``y`` when typology bit 0 is set, else ``z``.

    Bits 1.. are random but fixed per language. Returns the corpus, the table
    and the successor of each language.
    """
    rng = np.random.default_rng(seed)
    names = list(sizes)
    rows = {}
    successors = {}
    for j, name in enumerate(names):
        bit = j % 2 == 0
        rows[name] = np.concatenate([[float(bit)], rng.integers(0, 2, num_features - 1).astype(float)])
        successors[name] = "y" if bit else "z"
    table = TypologyTable(tuple(f"feat{i}" for i in range(num_features)), rows)
    corpus = Corpus.concat(
        rule_words(RuleLanguage(name, successors[name], sizes[name]), seed, **word_kw)
        for name in names
    )
    return corpus, table, successors


def divergent_positions(corpus: Corpus) -> list[np.ndarray]:
    """Per entry, the target positions (1-based over the wrapped sequence) that follow the trigger."""
    out = []
    for e in corpus.entries:
        syms = e.symbols
        out.append(np.array([t for t in range(1, len(syms)) if syms[t - 1] == TRIGGER], dtype=np.int64))
    return out


def split_by_language(corpus: Corpus, languages: Sequence[str] | None = None) -> dict[str, Corpus]:
    languages = corpus.languages if languages is None else languages
    return {lang: Corpus([e for e in corpus.entries if e.language == lang]) for lang in languages}
