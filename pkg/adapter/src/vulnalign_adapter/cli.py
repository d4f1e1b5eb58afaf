"""Command-line exporter mirroring the primary toolkit's method names.

Subcommands: score (attention-first / attention-last / attention-N /
integrated-gradients), convert-attnlrp, make-toy-checkpoint.
"""

import argparse
import itertools
import json
import sys

from . import export
from .toymodel import build_toy_checkpoint


def read_dataset(path):
    rows = list(export.read_jsonl(path))
    for row in rows:
        if "id" not in row or "code" not in row:
            raise export.ExportError(f"{path}: dataset rows need id and code")
    return rows


def cmd_score(args):
    model, tokenizer = export.load_detector(args.checkpoint)
    functions = read_dataset(args.dataset)
    streams = []
    for method in args.methods.split(","):
        method = method.strip()
        if method.startswith("attention"):
            selector = method.split("-", 1)[1] if "-" in method else "first"
            streams.append(export.export_attention(
                model, tokenizer, functions, layer_selector=selector,
                max_content=args.budget, checkpoint_id=args.checkpoint,
            ))
        elif method == "integrated-gradients":
            streams.append(export.export_ig(
                model, tokenizer, functions, steps=args.ig_steps,
                max_content=args.budget, checkpoint_id=args.checkpoint,
            ))
        else:
            raise export.ExportError(f"unknown method {method!r}")
    records = [export.validate_record(r, max_content=args.budget)
               for r in itertools.chain(*streams)]
    export.write_records(records, args.out)
    print(f"wrote {args.out} ({len(records)} records)")


def cmd_convert_attnlrp(args):
    records = [export.validate_record(r)
               for r in export.convert_attnlrp(export.read_jsonl(args.input))]
    export.write_records(records, args.out)
    print(f"wrote {args.out} ({len(records)} records)")


def cmd_make_toy_checkpoint(args):
    corpus = [row["code"] for row in read_dataset(args.dataset)]
    build_toy_checkpoint(
        corpus, args.out, vocab_size=args.vocab_size, seed=args.seed,
    )
    print(f"wrote checkpoint to {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vulnalign-adapter",
        description="Export relevance from pretrained detectors to vulnalign interchange JSONL",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score")
    p.set_defaults(fn=cmd_score)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--methods",
                   default="attention-first,attention-last,integrated-gradients")
    p.add_argument("--ig-steps", type=int, default=64)
    p.add_argument("--budget", type=int, default=export.MAX_CONTENT_TOKENS)
    p.add_argument("--out", default="relevance.jsonl")

    p = sub.add_parser("convert-attnlrp")
    p.set_defaults(fn=cmd_convert_attnlrp)
    p.add_argument("--input", required=True)
    p.add_argument("--out", default="relevance.jsonl")

    p = sub.add_parser("make-toy-checkpoint")
    p.set_defaults(fn=cmd_make_toy_checkpoint)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (export.ExportError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
