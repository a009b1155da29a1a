"""Command-line entry point: train, eval, export, analyze, dist, adapt."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import analysis, model as model_mod
from .corpus import Corpus, build_vocab, load_dictionary, save_dictionary, split
from .model import ModelConfig, new_model
from .trainer import TrainConfig, perplexity, train
from .typology import load_typology


class ManifestError(ValueError):
    pass


@dataclass
class RunManifest:
    languages: list[tuple[str, Path]]
    typology: Path | None = None
    variant: str = "baseline"
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    out: Path | None = None
    seed: int = 0
    allow_unk: bool = False

    def validate(self) -> None:
        if not self.languages:
            raise ManifestError("manifest lists no languages")
        ids = [lang for lang, _ in self.languages]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise ManifestError(f"duplicate language id(s): {', '.join(sorted(dup))}")
        if self.variant == "typology" and self.typology is None:
            raise ManifestError("variant 'typology' needs a typology file")
        _check_keys(self.model, ModelConfig, "model", exclude={"variant", "seed"})
        _check_keys(self.train, TrainConfig, "train", exclude={"seed", "allow_unk"})

    @classmethod
    def from_file(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{exc.lineno}: {exc.msg}") from None
        base = path.parent
        try:
            langs = [(str(e["id"]), base / e["path"]) for e in data.get("languages", [])]
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: each language needs 'id' and 'path' ({exc})") from None
        unknown = set(data) - {"languages", "typology", "variant", "model", "train", "out", "seed", "allow_unk"}
        if unknown:
            raise ManifestError(f"{path}: unknown manifest key(s): {', '.join(sorted(unknown))}")
        return cls(
            languages=langs,
            typology=base / data["typology"] if data.get("typology") else None,
            variant=data.get("variant", "baseline"),
            model=dict(data.get("model", {})),
            train=dict(data.get("train", {})),
            out=base / data["out"] if data.get("out") else None,
            seed=int(data.get("seed", 0)),
            allow_unk=bool(data.get("allow_unk", False)),
        )


def _check_keys(d: dict, cls, section: str, exclude: set[str]) -> None:
    allowed = {f.name for f in fields(cls)} - exclude
    bad = set(d) - allowed
    if bad:
        raise ManifestError(f"unknown {section} option(s): {', '.join(sorted(bad))}")


def _lang_pair(text: str) -> tuple[str, Path]:
    lang, eq, path = text.partition("=")
    if not eq or not lang or not path:
        raise argparse.ArgumentTypeError(f"expected LANG=PATH, got {text!r}")
    return lang, Path(path)


def _phones(text: str) -> list[str]:
    return text.split()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    manifest = RunManifest.from_file(args.manifest) if args.manifest else RunManifest(languages=[])
    if args.lang:
        manifest.languages = list(args.lang)
    overrides = {
        "typology": args.typology,
        "variant": args.variant,
        "out": args.out,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(manifest, key, value)
    if args.allow_unk:
        manifest.allow_unk = True
    for key in ("embed_dim", "hidden", "lang_dim", "cell"):
        if getattr(args, key) is not None:
            manifest.model[key] = getattr(args, key)
    if args.context is not None:
        manifest.model["context"] = args.context
    for key in ("epochs", "batch_size", "lr", "clip"):
        if getattr(args, key) is not None:
            manifest.train[key] = getattr(args, key)
    if manifest.out is None:
        raise ManifestError("no output directory (--out or manifest 'out')")
    manifest.validate()

    corpora = [load_dictionary(path, lang) for lang, path in manifest.languages]
    vocab = build_vocab(corpora, with_unk=manifest.allow_unk)
    typology = load_typology(manifest.typology) if manifest.variant == "typology" else None
    mcfg = ModelConfig(**manifest.model, variant=manifest.variant, seed=manifest.seed)
    tcfg = TrainConfig(**manifest.train, seed=manifest.seed, allow_unk=manifest.allow_unk)

    out = Path(manifest.out)
    (out / "splits").mkdir(parents=True, exist_ok=True)
    parts = []
    for (lang, _), corpus in zip(manifest.languages, corpora):
        tr, dv, te = split(corpus, seed=manifest.seed)
        for name, part in (("train", tr), ("dev", dv), ("test", te)):
            save_dictionary(part, out / "splits" / f"{lang}.{name}.tsv")
        parts.append((tr, dv, te))
    train_c = Corpus.concat(p[0] for p in parts)
    dev_c = Corpus.concat(p[1] for p in parts)

    m = new_model(mcfg, vocab, typology)
    m, report = train(m, train_c, dev_c, tcfg)
    model_mod.save(m, out / "model.bin")
    report.save(out / "report.json")
    (out / "timing.json").write_text(
        json.dumps([r.wall_time for r in report.epochs]) + "\n", encoding="utf-8"
    )
    (out / "config.json").write_text(
        json.dumps({"model": asdict(mcfg), "train": asdict(tcfg)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    for r in report.epochs:
        print(f"epoch {r.epoch}\ttrain_loss {r.train_loss!r}\tdev_perplexity {r.dev_perplexity!r}")
    print(f"model\t{out / 'model.bin'}")
    return 0


def cmd_eval(args) -> int:
    m = model_mod.load(args.model)
    corpus = Corpus.concat(load_dictionary(path, lang) for lang, path in args.dict)
    ppl = perplexity(m, corpus, args.allow_unk)
    print(repr(ppl))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(json.dumps({"perplexity": ppl}) + "\n", encoding="utf-8")
    return 0


def cmd_export(args) -> int:
    m = model_mod.load(args.model)
    emb = analysis.export_vectors(m, include_special=args.include_special)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.save_vectors(emb, out / "vectors.tsv")
    print(f"{len(emb)} vectors of dimension {emb.dim} -> {out / 'vectors.tsv'}")
    return 0


def cmd_analyze(args) -> int:
    emb = analysis.load_vectors(args.vectors)
    if args.what == "qvec":
        result = analysis.qvec_align(emb, analysis.load_linguistic(args.ling))
        for a in result.alignments:
            flag = "\tconstant" if a.constant else ""
            print(f"{a.property}\t{a.dimension}\t{a.correlation:.6f}{flag}")
        print(f"score\t{result.score:.6f}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "qvec.json").write_text(result.to_json(), encoding="utf-8")
    elif args.what == "top":
        print(" ".join(analysis.top_phones(emb, args.dim, args.n)))
    else:
        for phone, dist in analysis.nearest_phones(emb, args.phone, args.n):
            print(f"{phone}\t{dist:.6f}")
    return 0


def cmd_dist(args) -> int:
    emb = analysis.load_vectors(args.vectors)
    sources = args.phones.split(",") if args.phones else None
    targets = args.targets.split(",") if args.targets else None
    table = analysis.substitution_table(emb, sources, targets)
    text = table.to_tsv()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "substitutions.tsv").write_text(text, encoding="utf-8")
    return 0


def cmd_adapt(args) -> int:
    emb = analysis.load_vectors(args.vectors)
    src, cand = _phones(args.source), _phones(args.candidate)
    phones = sorted(set(src) | set(cand))
    table = analysis.substitution_table(emb, phones)
    cost, trace = analysis.adapt_score(src, cand, table, args.indel)
    print(f"cost\t{cost!r}")
    for e in trace:
        print(f"{e.op}\t{e.source_phone or '-'}\t{e.target_phone or '-'}\t{e.cost!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyglot-lm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="build vocab, split, train, save model and report")
    t.add_argument("--manifest", type=Path)
    t.add_argument("--lang", type=_lang_pair, action="append", metavar="LANG=PATH",
                   help="dictionary for one language (repeatable; replaces manifest languages)")
    t.add_argument("--typology", type=Path)
    t.add_argument("--variant", choices=model_mod.VARIANTS)
    t.add_argument("--cell", choices=model_mod.CELLS)
    t.add_argument("--embed-dim", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--lang-dim", type=int)
    t.add_argument("--context", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--clip", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--allow-unk", action="store_true")
    t.add_argument("--out", type=Path)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="perplexity of a saved model on dictionaries")
    e.add_argument("--model", type=Path, required=True)
    e.add_argument("--dict", type=_lang_pair, action="append", required=True, metavar="LANG=PATH")
    e.add_argument("--allow-unk", action="store_true")
    e.add_argument("--out", type=Path)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export", help="write phone vectors")
    x.add_argument("--model", type=Path, required=True)
    x.add_argument("--include-special", action="store_true")
    x.add_argument("--out", type=Path, required=True)
    x.set_defaults(func=cmd_export)

    a = sub.add_parser("analyze", help="qvec alignment, top phones, nearest neighbours")
    a.add_argument("--vectors", type=Path, required=True)
    a.add_argument("--out", type=Path)
    asub = a.add_subparsers(dest="what", required=True)
    q = asub.add_parser("qvec")
    q.add_argument("--ling", type=Path, required=True)
    tp = asub.add_parser("top")
    tp.add_argument("--dim", type=int, required=True)
    tp.add_argument("-n", type=int, default=10)
    nn = asub.add_parser("nearest")
    nn.add_argument("--phone", required=True)
    nn.add_argument("-n", type=int, default=5)
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("dist", help="cosine-distance substitution table")
    d.add_argument("--vectors", type=Path, required=True)
    d.add_argument("--phones", help="comma-separated source phones (default: all)")
    d.add_argument("--targets", help="comma-separated target phones (default: same as sources)")
    d.add_argument("--out", type=Path)
    d.set_defaults(func=cmd_dist)

    ad = sub.add_parser("adapt", help="weighted edit distance between two phone strings")
    ad.add_argument("--vectors", type=Path, required=True)
    ad.add_argument("--indel", type=float, default=1.0)
    ad.add_argument("source", help="space-separated phones")
    ad.add_argument("candidate", help="space-separated phones")
    ad.set_defaults(func=cmd_adapt)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, IndexError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"polyglot-lm {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
