"""Write a synthetic rule-language run directory usable with ``polyglot-lm train --manifest``.

    python3 scripts/make_synthetic.py runs/two-rule --kind two-rule --words 500
    python3 scripts/make_synthetic.py runs/typology --kind typology --words 100
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from polyglot_lm.corpus import save_dictionary
from polyglot_lm.synthetic import split_by_language, two_rule_languages, typology_rule_languages
from polyglot_lm.typology import format_typology

SMALL_WORDS = dict(filler=["a", "i", "t", "n"], min_len=1, max_len=3, pairs=(1, 2))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", type=Path)
    ap.add_argument("--kind", choices=["two-rule", "typology"], default="two-rule")
    ap.add_argument("--words", type=int, default=500, help="words per language")
    ap.add_argument("--languages", type=int, default=4, help="typology kind only")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"seed": args.seed}
    if args.kind == "two-rule":
        corpus = two_rule_languages(args.words, seed=args.seed)
        manifest["variant"] = "lang"
    else:
        names = [chr(ord("A") + i) for i in range(args.languages)]
        corpus, table, successors = typology_rule_languages(
            {n: args.words for n in names}, seed=args.seed, **SMALL_WORDS
        )
        (args.out / "typology.csv").write_text(format_typology(table), encoding="utf-8")
        manifest["typology"] = "typology.csv"
        manifest["variant"] = "typology"
        print("successors:", successors)

    langs = []
    for lang, part in split_by_language(corpus).items():
        save_dictionary(part, args.out / f"{lang}.tsv")
        langs.append({"id": lang, "path": f"{lang}.tsv"})
    manifest["languages"] = langs
    manifest["out"] = "run"
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(corpus)} words in {len(langs)} languages to {args.out}")


if __name__ == "__main__":
    main()
