"""Command-line front end.

Subcommands: extract-gt, train-vocab, train-model, score, evaluate, report.
Options may come from flags or a key=value config file (flags win). The
output directory can be overridden with the VULNALIGN_OUT_DIR environment
variable. Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import groundtruth as gt_mod
from . import metric as metric_mod
from . import microformer as mf
from . import relevance as rel_mod
from . import tokenizer as tok_mod

log = logging.getLogger("vulnalign")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

METHODS = ("attention-first", "attention-last", "integrated-gradients")


class ValidationError(Exception):
    pass


def read_config(path):
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def resolve(args, key, default=None, cast=str):
    """Flag value, else config file value, else default."""
    val = getattr(args, key, None)
    if val is None and args.config_values:
        raw = args.config_values.get(key)
        if raw is not None:
            val = cast(raw)
    return default if val is None else val


def out_dir(args):
    d = os.environ.get("VULNALIGN_OUT_DIR") or resolve(args, "out_dir", ".")
    os.makedirs(d, exist_ok=True)
    return d


def read_dataset(path):
    """Dataset JSONL: {"id","code","label"[,"fixed_code"]}; duplicate ids are an error."""
    rows = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON: {exc}")
            if "id" not in obj or "code" not in obj:
                raise ValidationError(f"{path}:{lineno}: record needs id and code")
            if obj["id"] in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate id {obj['id']!r}")
            seen.add(obj["id"])
            rows.append(obj)
    return rows


def cmd_train_vocab(args):
    rows = read_dataset(resolve(args, "dataset"))
    vocab = tok_mod.train_bpe(
        [r["code"] for r in rows],
        target_vocab_size=resolve(args, "vocab_size", 8192, int),
    )
    path = os.path.join(out_dir(args), "vocab.json")
    vocab.save(path)
    print(f"wrote {path} ({vocab.size} symbols, {len(vocab.merges)} merges)")


def cmd_extract_gt(args):
    records = []
    n_skipped = 0
    for lineno, pair, err in gt_mod.read_pairs(resolve(args, "dataset")):
        if err:
            log.warning("line %d: %s; record skipped", lineno, err)
            n_skipped += 1
            continue
        records.append(gt_mod.extract_ground_truth(pair))
    ids = [r.function_id for r in records]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate function ids in pair file")
    path = os.path.join(out_dir(args), "groundtruth.jsonl")
    gt_mod.write_ground_truth(records, path)
    n_empty = sum(1 for r in records if not r.vulnerable_lines)
    print(f"wrote {path} ({len(records)} records, {n_empty} with empty ground truth, "
          f"{n_skipped} skipped)")


def _encode_rows(rows, vocab, budget):
    return [tok_mod.encode(vocab, r["code"], budget=budget, function_id=r["id"])
            for r in rows]


def cmd_train_model(args):
    rows = read_dataset(resolve(args, "dataset"))
    vocab = tok_mod.Vocabulary.load(resolve(args, "vocab"))
    budget = resolve(args, "budget", tok_mod.DEFAULT_BUDGET, int)
    seed = resolve(args, "seed", 0, int)
    dataset = [
        (tok, int(r["label"]))
        for tok, r in zip(_encode_rows(rows, vocab, budget), rows)
    ]
    hyper = mf.Hyper(
        vocab_size=vocab.size,
        d=resolve(args, "dim", 32, int),
        heads=resolve(args, "heads", 4, int),
        layers=resolve(args, "layers", 2, int),
        d_ff=resolve(args, "d_ff", 64, int),
        j_max=budget + 2,
    )
    params = mf.init_params(hyper, seed=seed, vocab_hash=mf.vocab_fingerprint(vocab))
    params = mf.train_toy(
        params,
        dataset,
        epochs=resolve(args, "epochs", 10, int),
        learning_rate=resolve(args, "learning_rate", 0.1, float),
        seed=seed,
    )
    path = os.path.join(out_dir(args), "model.ckpt")
    mf.save_checkpoint(params, path)
    print(f"wrote {path}")


def _select_layer(selector, n_layers):
    if selector == "first":
        return 0
    if selector == "last":
        return n_layers - 1
    layer = int(selector)
    if not (0 <= layer < n_layers):
        raise ValidationError(f"layer {layer} outside 0..{n_layers - 1}")
    return layer


def cmd_score(args):
    rows = read_dataset(resolve(args, "dataset"))
    vocab = tok_mod.Vocabulary.load(resolve(args, "vocab"))
    params = mf.load_checkpoint(resolve(args, "checkpoint"))
    if params.vocab_hash and params.vocab_hash != mf.vocab_fingerprint(vocab):
        raise ValidationError("checkpoint was trained with a different vocabulary")
    budget = resolve(args, "budget", tok_mod.DEFAULT_BUDGET, int)
    methods = resolve(args, "methods", ",".join(METHODS)).split(",")
    ig_steps = resolve(args, "ig_steps", 64, int)
    use_abs = bool(resolve(args, "absolute", False, lambda s: s.lower() == "true"))

    records = []
    for tok in _encode_rows(rows, vocab, budget):
        for method in methods:
            method = method.strip()
            if method.startswith("attention"):
                selector = method.split("-", 1)[1] if "-" in method else "first"
                layer = _select_layer(selector, params.hyper.layers)
                record = mf.attention_relevance(params, tok, layer)
            elif method == "integrated-gradients":
                record = mf.integrated_gradients(params, tok, mf.IGConfig(steps=ig_steps))
            else:
                raise ValidationError(f"unknown method {method!r}")
            if use_abs:
                record = rel_mod.absolute_variant(record)
            records.append(record)
    path = os.path.join(out_dir(args), "relevance.jsonl")
    rel_mod.write_records(records, path)
    print(f"wrote {path} ({len(records)} records)")


def cmd_evaluate(args):
    records = rel_mod.read_records(resolve(args, "relevance"))
    seen = set()
    for r in records:
        key = (r.function_id, r.method)
        if key in seen:
            raise ValidationError(f"duplicate relevance record for {key}")
        seen.add(key)
    gts = gt_mod.read_ground_truth(resolve(args, "groundtruth"))

    true_labels = None
    dataset_path = resolve(args, "dataset")
    if dataset_path:
        true_labels = {r["id"]: int(r["label"]) for r in read_dataset(dataset_path)}

    results = []
    preds_by_id = {}
    for record in records:
        gt = gts.get(record.function_id)
        if gt is None:
            log.warning("%s: no ground truth; skipped", record.function_id)
            continue
        vec = rel_mod.line_relevance(record, gt.line_count)
        fuzzy = metric_mod.fuzzify_ground_truth(gt)
        results.append(metric_mod.detection_alignment(vec, fuzzy, record.predicted_label))
        preds_by_id[record.function_id] = record.predicted_label

    summary = metric_mod.aggregate(results)
    ids = sorted(preds_by_id)
    labels = [true_labels.get(i, 1) if true_labels else 1 for i in ids]
    summary = metric_mod.EvalSummary(
        mean_da=summary.mean_da,
        f1=metric_mod.f1_score([preds_by_id[i] for i in ids], labels),
        n_evaluated=summary.n_evaluated,
        n_excluded=summary.n_excluded,
        n_false_negative=summary.n_false_negative,
    )
    odir = out_dir(args)
    results_path = os.path.join(odir, "results.jsonl")
    summary_path = os.path.join(odir, "summary.json")
    metric_mod.write_results(results, results_path)
    metric_mod.write_summary(summary, summary_path)
    print(f"wrote {results_path} and {summary_path}")
    for method, mean in summary.mean_da.items():
        print(f"  {method}: mean DA = {mean:.4f} "
              f"(n={summary.n_evaluated[method]}, excluded={summary.n_excluded[method]})")
    print(f"  F1 = {summary.f1:.4f}")


def cmd_report(args):
    results = metric_mod.read_results(resolve(args, "results"))
    odir = out_dir(args)

    methods = sorted({r.method for r in results})
    lines = []
    if methods:
        summary = metric_mod.aggregate(results)
        header = ["metric"] + methods
        lines.append("  ".join(f"{h:>22}" for h in header))
        row = ["mean DA"] + [
            f"{summary.mean_da[m]:.4f}" if not math.isnan(summary.mean_da[m]) else "n/a"
            for m in methods
        ]
        lines.append("  ".join(f"{c:>22}" for c in row))
        row = ["evaluated"] + [str(summary.n_evaluated[m]) for m in methods]
        lines.append("  ".join(f"{c:>22}" for c in row))
        row = ["excluded"] + [str(summary.n_excluded[m]) for m in methods]
        lines.append("  ".join(f"{c:>22}" for c in row))
    table = "\n".join(lines)
    table_path = os.path.join(odir, "report.txt")
    with open(table_path, "w") as fh:
        fh.write(table + ("\n" if table else ""))
    print(table)

    relevance_path = resolve(args, "relevance")
    gt_path = resolve(args, "groundtruth")
    if relevance_path and gt_path:
        records = rel_mod.read_records(relevance_path)
        gts = gt_mod.read_ground_truth(gt_path)
        csv_path = os.path.join(odir, "line_relevance.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "method", "line", "relevance", "ground_truth"])
            for record in records:
                gt = gts.get(record.function_id)
                if gt is None:
                    continue
                vec = rel_mod.line_relevance(record, gt.line_count)
                for line, value in enumerate(vec.values):
                    writer.writerow([
                        record.function_id, record.method, line,
                        f"{value:.6f}", int(line in gt.vulnerable_lines),
                    ])
        print(f"wrote {csv_path}")


def build_parser():
    parser = argparse.ArgumentParser(prog="vulnalign",
                                     description="Detection Alignment evaluation toolkit")
    parser.add_argument("--config", help="key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, options):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        for opt, kwargs in options:
            p.add_argument(opt, **kwargs)
        p.add_argument("--out-dir", dest="out_dir")
        return p

    add("train-vocab", cmd_train_vocab, [
        ("--dataset", {}),
        ("--vocab-size", {"dest": "vocab_size", "type": int}),
    ])
    add("extract-gt", cmd_extract_gt, [
        ("--dataset", {}),
    ])
    add("train-model", cmd_train_model, [
        ("--dataset", {}),
        ("--vocab", {}),
        ("--budget", {"type": int}),
        ("--seed", {"type": int}),
        ("--dim", {"type": int}),
        ("--heads", {"type": int}),
        ("--layers", {"type": int}),
        ("--d-ff", {"dest": "d_ff", "type": int}),
        ("--epochs", {"type": int}),
        ("--learning-rate", {"dest": "learning_rate", "type": float}),
    ])
    add("score", cmd_score, [
        ("--dataset", {}),
        ("--vocab", {}),
        ("--checkpoint", {}),
        ("--budget", {"type": int}),
        ("--methods", {}),
        ("--ig-steps", {"dest": "ig_steps", "type": int}),
        ("--absolute", {"action": "store_const", "const": True}),
    ])
    add("evaluate", cmd_evaluate, [
        ("--relevance", {}),
        ("--groundtruth", {}),
        ("--dataset", {}),
    ])
    add("report", cmd_report, [
        ("--results", {}),
        ("--relevance", {}),
        ("--groundtruth", {}),
    ])
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config_values = read_config(args.config) if args.config else {}
    try:
        args.fn(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
