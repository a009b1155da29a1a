"""Two languages with opposite successor rules on a shared trigger phone.

Trains the language-blind baseline and the language-conditioned model on the
concatenated corpus and reports dev perplexity at the positions right after
the trigger, where the rules disagree. A language-blind model cannot beat 2.
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np

from polyglot_lm.corpus import Corpus, build_vocab, split
from polyglot_lm.model import ModelConfig, new_model
from polyglot_lm.synthetic import divergent_positions, split_by_language, two_rule_languages
from polyglot_lm.trainer import TrainConfig, perplexity, target_log_probs, train


def divergent_perplexity(model, dev: Corpus) -> float:
    lps = target_log_probs(model, dev)
    picked = np.concatenate([lp[pos - 1] for lp, pos in zip(lps, divergent_positions(dev))])
    return math.exp(-picked.mean())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--words", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=TrainConfig.lr)
    args = ap.parse_args()

    print("seed\tvariant\tdev_ppl\tdivergent_ppl\tseconds")
    for seed in args.seeds:
        parts = [split(c, seed=seed) for c in split_by_language(two_rule_languages(args.words, seed)).values()]
        tr = Corpus.concat(p[0] for p in parts)
        dv = Corpus.concat(p[1] for p in parts)
        vocab = build_vocab([tr, dv])
        for variant in ("baseline", "lang"):
            start = time.perf_counter()
            m = new_model(ModelConfig(variant=variant, seed=seed), vocab)
            m, _ = train(m, tr, dv, TrainConfig(epochs=args.epochs, lr=args.lr, seed=seed))
            print(
                f"{seed}\t{variant}\t{perplexity(m, dv):.4f}\t{divergent_perplexity(m, dv):.4f}"
                f"\t{time.perf_counter() - start:.1f}"
            )


if __name__ == "__main__":
    main()
