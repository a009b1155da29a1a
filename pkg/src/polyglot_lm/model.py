"""Baseline, language-conditioned and typology-conditioned phone LMs.

Per target position the model reads the ``k`` most recent symbols, embeds
them (concatenated, oldest first), forms a linear local context
``c = W_cx x + W_clang x_lang + b_c``, runs it through the recurrent cell to get
the global context ``g`` and predicts the next symbol from ``g`` (baseline,
lang) or from ``vec(g fᵀ)`` with ``f = tanh(W_lang t + b_lang)`` (typology).
"""
from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numeric as nm
from .corpus import Batch, Entry, Vocab, context_windows
from .typology import TypologyTable, features_for

VARIANTS = ("baseline", "lang", "typology")
CELLS = ("lstm", "rnn")

MAGIC = b"PGLM\x00\x01\x0d\x0a"
FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 100
    context: int = 3
    hidden: int = 100
    lang_dim: int = 20
    variant: str = "baseline"
    cell: str = "lstm"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("embed_dim", "context", "hidden", "lang_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}, got {self.cell!r}")


@dataclass
class PolyglotModel:
    config: ModelConfig
    vocab: Vocab
    params: dict[str, np.ndarray]
    typology: TypologyTable | None = None

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def typology_matrix(self) -> np.ndarray | None:
        """(#languages, F) rows in vocabulary language order."""
        if self.typology is None:
            return None
        return np.stack([features_for(self.typology, lang) for lang in self.vocab.languages])

    def with_params(self, params: dict[str, np.ndarray]) -> "PolyglotModel":
        return replace(self, params=params)


def _param_shapes(config: ModelConfig, vocab: Vocab, num_features: int) -> dict[str, tuple[int, ...]]:
    d, k, H, L = config.embed_dim, config.context, config.hidden, config.lang_dim
    V, n_lang = len(vocab), len(vocab.languages)
    shapes: dict[str, tuple[int, ...]] = {"X": (d, V)}
    if config.variant != "baseline":
        shapes["X_lang"] = (d, n_lang)
    shapes["W_cx"] = (H, k * d)
    if config.variant != "baseline":
        shapes["W_clang"] = (H, d)
    shapes["b_c"] = (H,)
    if config.cell == "lstm":
        shapes.update({"lstm.W_x": (4 * H, H), "lstm.W_h": (4 * H, H), "lstm.b": (4 * H,)})
    else:
        shapes.update({"rnn.W_hx": (H, H), "rnn.W_hh": (H, H), "rnn.b_h": (H,)})
    if config.variant == "typology":
        shapes["W_lang"] = (L, num_features)
        shapes["b_lang"] = (L,)
    shapes["W_out"] = (V, H * L if config.variant == "typology" else H)
    shapes["b_out"] = (V,)
    return shapes


def new_model(config: ModelConfig, vocab: Vocab, typology: TypologyTable | None = None) -> PolyglotModel:
    """Initialize parameters deterministically from ``config.seed``.

    Weight matrices are uniform in ``±1/sqrt(fan_in)`` (lookup tables count a
    one-hot input, fan-in 1); biases are zero except the LSTM forget gate (1.0);
    the output layer is zero so the untrained model predicts uniformly.
    """
    if config.variant == "typology":
        if typology is None:
            raise ValueError("variant 'typology' requires a typology table")
        missing = [lang for lang in vocab.languages if lang not in typology]
        if missing:
            raise KeyError(f"typology table has no row for language(s): {', '.join(missing)}")
        typology = TypologyTable(
            typology.feature_names, {lang: typology.rows[lang] for lang in vocab.languages}
        )
    elif typology is not None:
        raise ValueError(f"variant {config.variant!r} does not take a typology table")

    F = typology.num_features if typology is not None else 0
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in _param_shapes(config, vocab, F).items():
        if name in ("W_out", "b_out") or len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            fan_in = 1 if name in ("X", "X_lang") else shape[1]
            s = 1.0 / math.sqrt(fan_in)
            params[name] = rng.uniform(-s, s, size=shape)
    if config.cell == "lstm":
        H = config.hidden
        params["lstm.b"][H : 2 * H] = 1.0
    return PolyglotModel(config, vocab, params, typology)


# ---------------------------------------------------------------------------
# building blocks (vector or batched inputs; arrays or tape variables)
# ---------------------------------------------------------------------------


def embed_context(model: PolyglotModel, context: Sequence[int], language: str | None = None, params=None):
    """(x_t, x_lang): concatenated context embeddings and the language vector.

    ``x_lang`` is None for the baseline.
    """
    P = model.params if params is None else params
    context = np.asarray(context, dtype=np.int64)
    x_t = nm.reshape(nm.take_columns(P["X"], context), (-1,))
    x_lang = None
    if model.variant != "baseline" and language is not None:
        x_lang = nm.take_columns(P["X_lang"], model.vocab.language_index(language))
    return x_t, x_lang


def local_context(model: PolyglotModel, x_t, x_lang=None, params=None):
    P = model.params if params is None else params
    c = nm.affine(P["W_cx"], x_t, P["b_c"])
    if model.variant != "baseline":
        if x_lang is None:
            raise ValueError(f"variant {model.variant!r} needs the language vector")
        c = nm.add(c, nm.affine(P["W_clang"], x_lang))
    return c


def language_projection(model: PolyglotModel, t_lang, params=None):
    """``tanh(W_lang t + b_lang)``; accepts one vector or a stack of rows."""
    if model.variant != "typology":
        raise ValueError(f"variant {model.variant!r} has no language layer")
    P = model.params if params is None else params
    return nm.tanh(nm.affine(P["W_lang"], t_lang, P["b_lang"]))


def output_logits(model: PolyglotModel, g, f=None, params=None):
    P = model.params if params is None else params
    if model.variant == "typology":
        if f is None:
            raise ValueError("typology variant needs the projected language vector")
        return nm.affine(P["W_out"], nm.vec(nm.outer(g, f)), P["b_out"])
    if f is not None:
        raise ValueError(f"variant {model.variant!r} does not take a language layer")
    return nm.affine(P["W_out"], g, P["b_out"])


def output_distribution(model: PolyglotModel, g, f=None, params=None):
    return nm.softmax(output_logits(model, g, f, params))


def _cell(model: PolyglotModel, P):
    if model.config.cell == "lstm":
        return nm.LstmCellParams(P["lstm.W_x"], P["lstm.W_h"], P["lstm.b"])
    return nm.RnnCellParams(P["rnn.W_hx"], P["rnn.W_hh"], P["rnn.b_h"])


def batch_log_probs(model: PolyglotModel, contexts: np.ndarray, languages: Sequence[str], params=None):
    """Per-step log-distributions for a padded context tensor of shape (B, T, k).

    Returns a list of length T with (B, |V|) log-probabilities each.
    """
    P = model.params if params is None else params
    B, T, k = contexts.shape
    if k != model.config.context:
        raise ValueError(f"batch context width {k} != model context width {model.config.context}")
    d, H = model.config.embed_dim, model.config.hidden
    variant = model.variant
    lang_idx = np.array([model.vocab.language_index(lang) for lang in languages], dtype=np.int64)

    lang_term = None
    if variant != "baseline":
        x_lang = nm.take_columns(P["X_lang"], lang_idx)
        lang_term = nm.affine(P["W_clang"], x_lang)
    f = None
    if variant == "typology":
        # one projection per language, gathered per sequence
        f_all = language_projection(model, model.typology_matrix, P)
        f = nm.take_rows(f_all, lang_idx)

    cell = _cell(model, P)
    zeros = np.zeros((B, H))
    state = (zeros, zeros)
    h = zeros
    out = []
    for t in range(T):
        x_t = nm.reshape(nm.take_columns(P["X"], contexts[:, t, :].reshape(-1)), (B, k * d))
        c = nm.affine(P["W_cx"], x_t, P["b_c"])
        if lang_term is not None:
            c = nm.add(c, lang_term)
        if model.config.cell == "lstm":
            g, state = nm.lstm_step(cell, c, state)
        else:
            g = h = nm.rnn_step(cell, c, h)
        out.append(nm.log_softmax(output_logits(model, g, f, P)))
    return out


def batch_target_log_probs(model: PolyglotModel, batch: Batch, params=None) -> list:
    """Log-probability of each gold target, one (B,) entry per time step."""
    if batch.vocab_size != len(model.vocab):
        raise ValueError(f"batch built for |V|={batch.vocab_size}, model has |V|={len(model.vocab)}")
    steps = batch_log_probs(model, batch.contexts, batch.languages, params)
    return [nm.pick(lp, batch.targets[:, t]) for t, lp in enumerate(steps)]


def forward_sequence(model: PolyglotModel, symbols: Sequence[str] | Entry, language: str | None = None, allow_unk: bool = False) -> np.ndarray:
    """Predictive distributions for positions 1..n-1 of a wrapped sequence, shape (n-1, |V|)."""
    if isinstance(symbols, Entry):
        language = symbols.language if language is None else language
        symbols = symbols.symbols
    if language is None:
        if model.variant != "baseline":
            raise ValueError(f"variant {model.variant!r} needs a language id")
        language = model.vocab.languages[0]
    ids = model.vocab.encode(symbols, allow_unk)
    contexts, _ = context_windows(ids, model.config.context, model.vocab.bos)
    steps = batch_log_probs(model, contexts[None], [language])
    return np.exp(np.stack([s[0] for s in steps])) if steps else np.zeros((0, len(model.vocab)))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _header(model: PolyglotModel) -> dict:
    typ = None
    if model.typology is not None:
        typ = {
            "feature_names": list(model.typology.feature_names),
            "rows": {lang: [int(v) for v in row] for lang, row in model.typology.rows.items()},
        }
    return {
        "config": asdict(model.config),
        "vocab": {
            "phones": list(model.vocab.phones),
            "languages": list(model.vocab.languages),
            "with_unk": model.vocab.with_unk,
        },
        "typology": typ,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in model.params.items()],
    }


def dumps(model: PolyglotModel) -> bytes:
    header = json.dumps(_header(model), sort_keys=True, ensure_ascii=False).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in model.params.values())
    return b"".join(
        (
            MAGIC,
            struct.pack("<IQ", FORMAT_VERSION, len(header)),
            header,
            struct.pack("<I", zlib.crc32(header)),
            struct.pack("<Q", len(body)),
            body,
            struct.pack("<I", zlib.crc32(body)),
        )
    )


def loads(data: bytes) -> PolyglotModel:
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFileError("magic header: not a polyglot model file")
    pos = len(MAGIC)
    try:
        version, hlen = struct.unpack_from("<IQ", data, pos)
        if version != FORMAT_VERSION:
            raise ModelFileError(f"version: file has format {version}, expected {FORMAT_VERSION}")
        pos += 12
        header = data[pos : pos + hlen]
        pos += hlen
        (hcrc,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if len(header) != hlen or zlib.crc32(header) != hcrc:
            raise ModelFileError("header: checksum mismatch")
        (blen,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        body = data[pos : pos + blen]
        pos += blen
        (bcrc,) = struct.unpack_from("<I", data, pos)
    except struct.error as exc:
        raise ModelFileError(f"truncated file: {exc}") from None
    if len(body) != blen or zlib.crc32(body) != bcrc:
        raise ModelFileError("parameter blocks: checksum mismatch")
    if pos + 4 != len(data):
        raise ModelFileError("trailer: unexpected bytes after parameter blocks")

    meta = json.loads(header.decode("utf-8"))
    config = ModelConfig(**meta["config"])
    v = meta["vocab"]
    vocab = Vocab(tuple(v["phones"]), tuple(v["languages"]), bool(v["with_unk"]))
    typology = None
    if meta["typology"] is not None:
        typology = TypologyTable(
            tuple(meta["typology"]["feature_names"]),
            {k: np.array(r, dtype=float) for k, r in meta["typology"]["rows"].items()},
        )
    params = {}
    offset = 0
    for spec in meta["params"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape)
        params[spec["name"]] = arr
        offset += 8 * n
    if offset != blen:
        raise ModelFileError("parameter blocks: size does not match header shapes")
    return PolyglotModel(config, vocab, params, typology)


def save(model: PolyglotModel, path: str | Path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path: str | Path) -> PolyglotModel:
    return loads(Path(path).read_bytes())
