"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 runtime
error (non-finite numbers, path explosion while decoding).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import checkpoint
from .codec import (
    DecodeOptions,
    PathExplosion,
    ThwConflict,
    decode_grid,
    encode_grid,
    format_grid_dump,
    parse_grid_dumps,
    render_grid,
)
from .core import GridNerError, LabelSet, NonFinite, Sentence
from .data import SynthSpec, build_vocab, gen_synthetic, read_jsonl, write_jsonl
from .metrics import report
from .model import ModelConfig
from .train import TrainConfig, predict_corpus, train_epochs

LOG_ENV = "GRIDNER_LOG_LEVEL"

_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"vocab_size", "relation_count"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_DECODE_KEYS = {f.name for f in fields(DecodeOptions)}
_OTHER_KEYS = {"min_freq"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def load_cli_config(path=None, overrides=None) -> dict:
    """Merge a JSON config file over nothing, then flag overrides over that.

    ``dropout`` is accepted as a synonym for ``dropout_p``; an optional
    ``toggles`` object is flattened into the top level. Unknown keys are an error.
    """
    cfg = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise GridNerError("config file must hold a JSON object")
        raw = dict(raw)
        toggles = raw.pop("toggles", {}) or {}
        if not isinstance(toggles, dict):
            raise GridNerError("'toggles' must be an object")
        raw.update(toggles)
        if "dropout" in raw:
            raw["dropout_p"] = raw.pop("dropout")
        cfg.update(raw)
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(cfg) - _MODEL_KEYS - _TRAIN_KEYS - _DECODE_KEYS - _OTHER_KEYS
    if unknown:
        raise GridNerError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _split(cfg, keys):
    return {k: v for k, v in cfg.items() if k in keys}


def _read_text(path):
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _labels_arg(value, corpus_labels):
    if value in (None, "auto"):
        return corpus_labels
    return LabelSet(tuple(t for t in value.split(",") if t))


def _read_corpus(path):
    if path == "-":
        import tempfile

        with tempfile.NamedTemporaryFile("w", suffix=".jsonl", delete=False, encoding="utf-8") as fh:
            fh.write(sys.stdin.read())
        try:
            return read_jsonl(fh.name)
        finally:
            os.unlink(fh.name)
    return read_jsonl(path)


def cmd_encode(args):
    sents, labels = _read_corpus(args.input)
    labels = _labels_arg(args.labels, labels)
    blocks = [format_grid_dump(encode_grid(s, labels), labels, s.tokens) for s in sents]
    _write("\n".join(blocks), args.out)


def cmd_decode(args):
    labels = None if args.labels in (None, "auto") else _labels_arg(args.labels, None)
    records, labels = parse_grid_dumps(_read_text(args.input), labels)
    opts = DecodeOptions(args.max_paths, not args.no_dedupe)
    lines = []
    for grid, tokens in records:
        ents = decode_grid(grid, labels, opts)
        if tokens is not None:
            obj = Sentence(tuple(tokens), tuple(ents)).to_json()
        else:
            obj = {"entities": [e.to_json() for e in ents]}
        lines.append(json.dumps(obj, ensure_ascii=False) + "\n")
    _write("".join(lines), args.out)


def cmd_dump_grid(args):
    sents, labels = _read_corpus(args.input)
    labels = _labels_arg(args.labels, labels)
    if not 0 <= args.index < len(sents):
        raise UsageError(f"--index {args.index} out of range for {len(sents)} sentences")
    s = sents[args.index]
    _write(render_grid(encode_grid(s, labels), labels, s.tokens), args.out)


def cmd_gen_synthetic(args):
    rates = [float(x) for x in args.rates.split(",")]
    if len(rates) != 3:
        raise UsageError("--rates needs three comma-separated numbers: flat,nested,discontinuous")
    spec = SynthSpec(
        n_sentences=args.n, min_len=args.min_len, max_len=args.max_len,
        entity_types=tuple(args.types.split(",")),
        flat_rate=rates[0], nested_rate=rates[1], disc_rate=rates[2],
        max_entities=args.max_entities, seed=args.seed,
    )
    _write(write_jsonl(gen_synthetic(spec)), args.out)


def cmd_train(args):
    cfg = load_cli_config(args.config, {
        "seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr, "batch_size": args.batch_size,
    })
    train, labels = _read_corpus(args.data)
    dev = None
    if args.dev:
        dev, dev_labels = _read_corpus(args.dev)
        labels = LabelSet.from_types([*labels.entity_types, *dev_labels.entity_types])
    vocab = build_vocab(train, cfg.get("min_freq", 1))
    model_cfg = ModelConfig(vocab_size=len(vocab), relation_count=labels.relation_count, **_split(cfg, _MODEL_KEYS))
    train_cfg = TrainConfig(**_split(cfg, _TRAIN_KEYS))
    opts = DecodeOptions(**_split(cfg, _DECODE_KEYS))
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None

    def on_epoch(rec):
        print(rec.line(), flush=True)
        if log_fh:
            log_fh.write(rec.line() + "\n")

    try:
        result = train_epochs(train, labels, vocab, model_cfg, train_cfg, dev=dev, on_epoch=on_epoch, opts=opts)
    finally:
        if log_fh:
            log_fh.close()
    if args.out:
        checkpoint.save(args.out, result.params, model_cfg, labels, vocab)


def cmd_predict(args):
    params, model_cfg, labels, vocab = checkpoint.load(args.model)
    if vocab is None:
        raise GridNerError("checkpoint carries no vocabulary")
    sents, _ = _read_corpus(args.input)
    opts = DecodeOptions(args.max_paths)
    preds = predict_corpus(sents, vocab, params, model_cfg, labels, opts)
    _write(write_jsonl(Sentence(s.tokens, tuple(p)) for s, p in zip(sents, preds)), args.out)


def cmd_eval(args):
    gold, _ = _read_corpus(args.gold)
    pred, _ = _read_corpus(args.pred)
    _write(report([p.entities for p in pred], [g.entities for g in gold]), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridner", description="Word-pair grid named entity recognition.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("encode", cmd_encode, "JSONL corpus -> grid dumps")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--labels", default="auto", help="'auto' or comma-separated entity types")
    sp.add_argument("--out")

    sp = add("decode", cmd_decode, "grid dumps -> JSONL entities")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--labels", default="auto")
    sp.add_argument("--max-paths", type=int, default=10_000)
    sp.add_argument("--no-dedupe", action="store_true")
    sp.add_argument("--out")

    sp = add("dump-grid", cmd_dump_grid, "render one sentence's grid as a text matrix")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--labels", default="auto")
    sp.add_argument("--out")

    sp = add("gen-synthetic", cmd_gen_synthetic, "write a seeded synthetic JSONL corpus")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--min-len", type=int, default=4)
    sp.add_argument("--max-len", type=int, default=20)
    sp.add_argument("--max-entities", type=int, default=4)
    sp.add_argument("--types", default="PER,LOC,SYM")
    sp.add_argument("--rates", default="0.4,0.3,0.3", help="flat,nested,discontinuous")
    sp.add_argument("--out")

    sp = add("train", cmd_train, "train a model; prints epoch<TAB>loss<TAB>dev_f1 lines")
    sp.add_argument("--config")
    sp.add_argument("--data", required=True)
    sp.add_argument("--dev")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--out", help="checkpoint path")
    sp.add_argument("--log", help="also write the epoch log here")

    sp = add("predict", cmd_predict, "predict entities for a JSONL corpus")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--max-paths", type=int, default=10_000)
    sp.add_argument("--out")

    sp = add("eval", cmd_eval, "micro P/R/F1 plus overlapped/discontinuous subsets")
    sp.add_argument("--gold", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--out")
    return p


def run(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (NonFinite, PathExplosion) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (GridNerError, ThwConflict, OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
