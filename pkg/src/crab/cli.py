"""``crab`` command line: preprocess, split, train, evaluate, predict.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from crab import checkpoint
from crab.dataset import (
    LabeledCorpus, SplitSpec, class_distribution, dump_corpus, load_corpus, save_corpus, stratified_split,
)
from crab.errors import ConfigError, CrabError, NumericError
from crab.model import CrabModel
from crab.stats import paired_t_test
from crab.text import NormRules, build_vocab, normalize, tokenize
from crab.train import TrainConfig, evaluate, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SPLIT_NAMES = ("train", "val", "test")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _rules(path: str | None) -> NormRules:
    return NormRules.load(path) if path else NormRules.default()


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def cmd_preprocess(args) -> int:
    corpus = load_corpus(args.input)
    rules = _rules(args.rules)
    out = corpus.with_texts([normalize(t, rules) for t in corpus.texts])
    if args.out:
        save_corpus(out, args.out)
    else:
        sys.stdout.write(dump_corpus(out))
    return EXIT_OK


def format_split_table(parts: Sequence[LabeledCorpus]) -> str:
    """Per-class counts, one row per split plus a total row."""
    names = parts[0].class_names
    rows = [["Class", *names, "Total"]]
    totals = [0] * len(names)
    for label, part in zip(SPLIT_NAMES, parts):
        counts = class_distribution(part)
        totals = [a + b for a, b in zip(totals, counts)]
        rows.append([label, *map(str, counts), str(sum(counts))])
    rows.append(["total", *map(str, totals), str(sum(totals))])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def cmd_split(args) -> int:
    corpus = load_corpus(args.corpus)
    parts = stratified_split(corpus, SplitSpec(tuple(args.ratios), args.seed))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_NAMES, parts):
        save_corpus(part, out_dir / f"{name}.tsv")
    sys.stdout.write(format_split_table(parts))
    return EXIT_OK


def build_model(train: LabeledCorpus, args) -> CrabModel:
    rules = _rules(args.rules)
    # vocabulary from the training split only
    vocab = build_vocab((tokenize(normalize(t, rules)) for t in train.texts), args.min_count, args.max_vocab)
    return CrabModel.init(vocab, rules, train.class_names, args.seed, dim=args.dim, max_len=args.max_len,
                          layers=args.layers, attn_heads=args.attn_heads, heads=args.heads, h1=args.fc1,
                          h2=args.fc2, alpha=args.alpha, output_mode=args.output_mode,
                          sentence_layer=args.sentence_layer == "on")


def cmd_train(args) -> int:
    train = load_corpus(args.train)
    val = load_corpus(args.val) if args.val else None
    if val is not None and val.class_names != train.class_names:
        raise ConfigError(f"validation classes {val.class_names} differ from training classes {train.class_names}")
    config = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, learning_rate=args.lr, seed=args.seed,
                         early_stop_patience=args.patience)
    model = build_model(train, args)

    def progress(record):
        f1 = "-" if record.val_macro_f1 is None else f"{record.val_macro_f1:.4f}"
        print(f"epoch {record.epoch}: train_loss {record.train_loss:.6f} val_macro_f1 {f1}", file=sys.stderr)

    history = fit(model, train, val, config, on_epoch=progress)
    meta = {
        "seed": args.seed,
        "epochs": args.epochs,
        "train_config": config.to_dict(),
        "history": history.to_dict(),
        "train_report": evaluate(model, train).to_dict(),
        "val_report": evaluate(model, val).to_dict() if val is not None and len(val) else None,
    }
    checkpoint.save(args.out, model, meta)
    if args.history:
        Path(args.history).write_text(history.format(), encoding="utf-8")
    print(f"saved {args.out} (best epoch {history.best_epoch}, vocab {len(model.vocab)})")
    return EXIT_OK


def _read_scores(path: str) -> list[float]:
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: not a number: {line!r}") from None
    return values


def cmd_evaluate(args) -> int:
    if args.compare:
        t, p = paired_t_test(_read_scores(args.compare[0]), _read_scores(args.compare[1]))
        print(f"t\t{t:.4f}\np\t{p:.4f}")
        return EXIT_OK
    if not args.model or not args.test:
        raise UsageError("evaluate needs MODEL and TEST (or --compare A B)")
    model, _ = checkpoint.load(args.model)
    test = load_corpus(args.test)
    if test.class_names != model.class_names:
        raise ConfigError(f"test classes {test.class_names} differ from model classes {model.class_names}")
    sys.stdout.write(evaluate(model, test).format())
    return EXIT_OK


def format_prediction(label: str, names: Sequence[str], probs) -> str:
    return "\t".join([label, *(f"{n}={p:.4f}" for n, p in zip(names, probs))])


def cmd_predict(args) -> int:
    model, _ = checkpoint.load(args.model)
    texts = args.text if args.text else [line.rstrip("\n") for line in sys.stdin]
    labels, probs = model.predict_texts(texts)
    for k, row in zip(labels, probs):
        print(format_prediction(model.class_names[k], model.class_names, row))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crab", description="Class-representation attentive text classifier.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="normalise every text of a corpus")
    p.add_argument("input")
    p.add_argument("--rules", help="normalisation rule table (default: shipped table)")
    p.add_argument("--out", help="output corpus (default: stdout)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="stratified train/val/test split")
    p.add_argument("corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=(0.8, 0.1, 0.1), metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("train")
    p.add_argument("--val")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--history", help="per-epoch log to write")
    p.add_argument("--rules")
    p.add_argument("--heads", type=_positive_int, default=4, help="token-wise heads m")
    p.add_argument("--sentence-layer", choices=("on", "off"), default="on")
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--fc1", type=_positive_int, default=64)
    p.add_argument("--fc2", type=_positive_int, default=128)
    p.add_argument("--output-mode", choices=("softmax", "sigmoid"), default="softmax")
    p.add_argument("--alpha", type=float, default=0.01, help="LeakyReLU slope")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=_positive_int, default=None, help="early stopping on val macro-F1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=_positive_int, default=64, help="encoder width k")
    p.add_argument("--max-len", type=int, default=64, help="sequence length N including the class token")
    p.add_argument("--layers", type=_positive_int, default=2)
    p.add_argument("--attn-heads", type=_positive_int, default=2)
    p.add_argument("--min-count", type=_positive_int, default=1)
    p.add_argument("--max-vocab", type=_positive_int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on a labelled corpus")
    p.add_argument("model", nargs="?")
    p.add_argument("test", nargs="?")
    p.add_argument("--compare", nargs=2, metavar=("SCORES_A", "SCORES_B"),
                   help="paired one-tailed t-test of per-seed score files (one number per line)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify texts (arguments, or stdin lines)")
    p.add_argument("model")
    p.add_argument("text", nargs="*")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"crab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"crab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CrabError, OSError) as exc:
        print(f"crab: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
