"""Masked cross-entropy, Adam training loop and perplexity."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numeric as nm
from .corpus import Batch, Corpus, encode_batch, make_batches
from .model import PolyglotModel, batch_target_log_probs

log = logging.getLogger(__name__)

EVAL_CHUNK = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 100
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clip: float | None = None  # global gradient-norm threshold
    allow_unk: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_perplexity: float | None
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def best_epoch(self) -> int | None:
        scored = [r for r in self.epochs if r.dev_perplexity is not None]
        if not scored:
            return None
        return min(scored, key=lambda r: r.dev_perplexity).epoch

    def to_dict(self, timing: bool = False) -> dict:
        records = []
        for r in self.epochs:
            rec = asdict(r)
            if not timing:
                rec.pop("wall_time")
            records.append(rec)
        return {"epochs": records, "best_epoch": self.best_epoch}

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path, timing: bool = False) -> None:
        Path(path).write_text(self.to_json(timing), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainReport":
        return cls([EpochRecord(**r) for r in data["epochs"]])


def _masked_nll_sum(model: PolyglotModel, batch: Batch, params=None):
    picked = batch_target_log_probs(model, batch, params)
    total = None
    for t, lp in enumerate(picked):
        term = nm.dot_const(lp, batch.mask[:, t])
        total = term if total is None else nm.add(total, term)
    return nm.mul(total, -1.0)


def sequence_loss(model: PolyglotModel, batch: Batch, params=None):
    """Mean negative natural-log probability of the unmasked gold targets."""
    n = batch.num_targets
    if n == 0:
        raise ValueError("batch has no unmasked targets")
    loss = nm.mul(_masked_nll_sum(model, batch, params), 1.0 / n)
    return loss if isinstance(loss, nm.Var) else float(loss)


def loss_and_grads(model: PolyglotModel, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    tape = nm.Tape()
    P = tape.params(model.params)
    loss = sequence_loss(model, batch, P)
    grads = nm.backward(tape, loss)
    return float(loss.value), grads


def _clip(grads: dict[str, np.ndarray], threshold: float) -> dict[str, np.ndarray]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= threshold:
        return grads
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}


def train(
    model: PolyglotModel, train_corpus: Corpus, dev_corpus: Corpus | None, config: TrainConfig
) -> tuple[PolyglotModel, TrainReport]:
    """Run ``config.epochs`` passes of shuffled minibatch Adam; return the final-epoch model."""
    state = nm.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    report = TrainReport()
    params = dict(model.params)
    k = model.config.context
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        batches = make_batches(
            train_corpus, model.vocab, config.batch_size, k,
            seed=config.seed * 100_003 + epoch, allow_unk=config.allow_unk,
        )
        nll_sum = 0.0
        count = 0
        for b, batch in enumerate(batches):
            loss, grads = loss_and_grads(model.with_params(params), batch)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            if config.clip is not None:
                grads = _clip(grads, config.clip)
            params, state = nm.adam_step(params, grads, state)
            nll_sum += loss * batch.num_targets
            count += batch.num_targets
        model = model.with_params(params)
        dev_ppl = perplexity(model, dev_corpus, config.allow_unk) if dev_corpus is not None and len(dev_corpus) else None
        rec = EpochRecord(epoch, nll_sum / count if count else float("nan"), dev_ppl, time.perf_counter() - start)
        report.epochs.append(rec)
        log.info("epoch %d: train loss %.4f, dev ppl %s", epoch, rec.train_loss, dev_ppl)
    return model, report


def corpus_nll(model: PolyglotModel, corpus: Corpus, allow_unk: bool = False) -> tuple[float, int]:
    """Total negative log-likelihood of all targets and the target count."""
    total = 0.0
    count = 0
    for i in range(0, len(corpus), EVAL_CHUNK):
        batch = encode_batch(corpus.entries[i : i + EVAL_CHUNK], model.vocab, model.config.context, allow_unk)
        total += float(_masked_nll_sum(model, batch))
        count += batch.num_targets
    return total, count


def perplexity(model: PolyglotModel, corpus: Corpus, allow_unk: bool = False) -> float:
    if len(corpus) == 0:
        raise ValueError("perplexity of an empty corpus")
    total, count = corpus_nll(model, corpus, allow_unk)
    return math.exp(total / count)


def target_log_probs(model: PolyglotModel, corpus: Corpus, allow_unk: bool = False) -> list[np.ndarray]:
    """Per-entry arrays of gold-target log-probabilities (positions 1..n-1)."""
    out = []
    for i in range(0, len(corpus), EVAL_CHUNK):
        entries = corpus.entries[i : i + EVAL_CHUNK]
        batch = encode_batch(entries, model.vocab, model.config.context, allow_unk)
        steps = np.stack(batch_target_log_probs(model, batch), axis=1)
        for b, e in enumerate(entries):
            out.append(steps[b, : len(e.phones) + 1].copy())
    return out
