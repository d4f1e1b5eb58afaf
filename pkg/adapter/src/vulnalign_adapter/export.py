"""Relevance export from pretrained transformer classifiers.

Produces interchange JSONL records -- {"id", "method", "predicted_label",
"tokens": [{"line", "score"}, ...]} plus a "provenance" object -- from any
sequence-classification checkpoint loadable with transformers. Token line
indices follow the first-character rule: a token that spans several source
lines is attributed to the line containing its first character.
"""

import json

import numpy as np
import torch
from scipy.special import roots_legendre
from transformers import AutoModelForSequenceClassification, AutoTokenizer

MAX_CONTENT_TOKENS = 510


class ExportError(ValueError):
    pass


def load_detector(checkpoint_dir):
    """Model in eval mode with eager attention (needed to export weights)."""
    model = AutoModelForSequenceClassification.from_pretrained(
        checkpoint_dir, attn_implementation="eager"
    )
    model.eval()
    tokenizer = AutoTokenizer.from_pretrained(checkpoint_dir)
    return model, tokenizer


def encode_function(tokenizer, code, max_content=MAX_CONTENT_TOKENS):
    """Tokenize with truncation to max_content content tokens.

    Returns (input_ids, content_positions, line_per_content_position,
    truncated).
    """
    enc = tokenizer(
        code,
        truncation=True,
        max_length=max_content + 2,
        return_offsets_mapping=True,
        return_special_tokens_mask=True,
    )
    full_len = len(tokenizer(code)["input_ids"])
    ids = enc["input_ids"]
    content, lines = [], []
    for pos, (special, (start, _stop)) in enumerate(
        zip(enc["special_tokens_mask"], enc["offset_mapping"])
    ):
        if special:
            continue
        content.append(pos)
        lines.append(code[:start].count("\n"))
    return ids, content, lines, full_len > len(ids)


def _record(function_id, method, predicted, lines, scores, provenance):
    return {
        "id": function_id,
        "method": method,
        "predicted_label": int(predicted),
        "tokens": [
            {"line": int(line), "score": float(score)}
            for line, score in zip(lines, scores)
        ],
        "provenance": provenance,
    }


def resolve_layer(selector, n_layers):
    if selector == "first":
        return 0
    if selector == "last":
        return n_layers - 1
    layer = int(selector)
    if not (0 <= layer < n_layers):
        raise ExportError(f"layer {layer} outside 0..{n_layers - 1} encoder layers")
    return layer


def export_attention(model, tokenizer, functions, layer_selector="first",
                     max_content=MAX_CONTENT_TOKENS, checkpoint_id=""):
    """Yield one record per function from one encoder layer's attention.

    A position's score is the total attention it receives across heads and
    query positions at the selected layer.
    """
    method = f"attention-{layer_selector}"
    for fn in functions:
        ids, content, lines, truncated = encode_function(tokenizer, fn["code"], max_content)
        with torch.no_grad():
            out = model(
                input_ids=torch.tensor([ids]), output_attentions=True
            )
        if out.attentions is None or not out.attentions:
            raise ExportError("checkpoint exposes no encoder attention layers")
        layer = resolve_layer(layer_selector, len(out.attentions))
        attn = out.attentions[layer][0]              # (H, J, J)
        incoming = attn.sum(dim=(0, 1)).numpy()      # received per position
        predicted = int(out.logits[0].argmax())
        yield _record(
            fn["id"], method, predicted, lines, incoming[content],
            provenance={
                "checkpoint": checkpoint_id,
                "tokenizer": tokenizer.__class__.__name__,
                "layer": layer,
                "truncated": truncated,
            },
        )


def gauss_legendre_unit(steps):
    """Nodes and weights on (0, 1); weights sum to 1."""
    nodes, weights = roots_legendre(steps)
    return (nodes + 1.0) / 2.0, weights / 2.0


def target_logit(model, inputs_embeds, target_class=1):
    return model(inputs_embeds=inputs_embeds).logits[0, target_class]


def export_ig(model, tokenizer, functions, steps=64, target_class=1,
              max_content=MAX_CONTENT_TOKENS, checkpoint_id=""):
    """Yield integrated-gradients records on the input embedding layer.

    The baseline replaces content tokens by the padding token; the path
    integral is approximated by Gauss-Legendre quadrature and each token's
    score is the embedding-dimension sum of (x - x') * accumulated gradient.
    """
    embeddings = model.get_input_embeddings()
    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        raise ExportError("tokenizer defines no padding token for the baseline")
    nodes, weights = gauss_legendre_unit(steps)
    for fn in functions:
        ids, content, lines, truncated = encode_function(tokenizer, fn["code"], max_content)
        id_tensor = torch.tensor([ids])
        baseline_ids = id_tensor.clone()
        baseline_ids[0, content] = pad_id
        with torch.no_grad():
            x = embeddings(id_tensor)
            x_base = embeddings(baseline_ids)
            predicted = int(model(input_ids=id_tensor).logits[0].argmax())
        delta = x - x_base

        accum = torch.zeros_like(x)
        for alpha, w in zip(nodes, weights):
            point = (x_base + alpha * delta).detach().requires_grad_(True)
            grad, = torch.autograd.grad(target_logit(model, point, target_class), point)
            accum += w * grad
        scores = (delta * accum).sum(dim=-1)[0].numpy()
        yield _record(
            fn["id"], "integrated-gradients", predicted, lines, scores[content],
            provenance={
                "checkpoint": checkpoint_id,
                "tokenizer": tokenizer.__class__.__name__,
                "steps": steps,
                "truncated": truncated,
            },
        )


def convert_attnlrp(rows):
    """Map an external AttnLRP export to interchange records.

    Expected input rows: {"id", "prediction", "token_scores": [floats],
    "token_lines": [ints]} with equal-length score/line arrays.
    """
    for row in rows:
        for key in ("id", "prediction", "token_scores", "token_lines"):
            if key not in row:
                raise ExportError(f"AttnLRP row missing {key!r}")
        if len(row["token_scores"]) != len(row["token_lines"]):
            raise ExportError(f"{row['id']}: score/line arrays differ in length")
        yield _record(
            row["id"], "attnlrp", row["prediction"],
            row["token_lines"], row["token_scores"],
            provenance={"source": "external-attnlrp"},
        )


# ---------------------------------------------------------------------------
# Interchange schema validation (the contract the primary pipeline consumes)
# ---------------------------------------------------------------------------

def validate_record(obj, max_content=MAX_CONTENT_TOKENS, line_count=None):
    for key in ("id", "method", "predicted_label", "tokens"):
        if key not in obj:
            raise ExportError(f"record missing {key!r}")
    if obj["predicted_label"] not in (0, 1):
        raise ExportError(f"{obj['id']}: predicted_label must be 0 or 1")
    if len(obj["tokens"]) > max_content:
        raise ExportError(f"{obj['id']}: more than {max_content} content tokens")
    for tok in obj["tokens"]:
        if set(tok) < {"line", "score"}:
            raise ExportError(f"{obj['id']}: token entry must carry line and score")
        if tok["line"] < 0 or (line_count is not None and tok["line"] >= line_count):
            raise ExportError(f"{obj['id']}: line index {tok['line']} out of range")
        float(tok["score"])
    return obj


def write_records(records, path):
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
