"""Per-token relevance to rescaled per-line relevance.

Token relevance can come from any producer (attention export, integrated
gradients, or an external tool speaking the interchange JSONL format);
this module aggregates token scores per line and min-max rescales the
result into [0, 1] so different methods are comparable.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

ROW_SUM_TOL = 1e-6


class RelevanceError(ValueError):
    pass


@dataclass(frozen=True)
class TokenRelevanceRecord:
    function_id: str
    method: str
    predicted_label: int
    scores: tuple  # ((line_index, raw_score), ...) aligned with content tokens


@dataclass(frozen=True)
class LineRelevanceVector:
    function_id: str
    values: np.ndarray  # length L, entries in [0, 1]
    method: str


@dataclass(frozen=True)
class AttentionTensor:
    function_id: str
    layer_index: int
    values: np.ndarray  # H x J x J
    head_count: int
    sequence_length: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.head_count, self.sequence_length, self.sequence_length):
            raise RelevanceError("attention tensor shape mismatch")
        object.__setattr__(self, "values", values)
        if np.any(values < 0):
            raise RelevanceError("not a softmax output: negative attention weight")
        row_sums = values.sum(axis=-1)
        if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
            raise RelevanceError("not a softmax output: attention rows do not sum to 1")


def attention_token_relevance(attn, token_lines, special_positions=(),
                              predicted_label=1, method="attention"):
    """Total attention each token receives, summed over heads and queries.

    Position i's score is sum over h, j of A[h, j, i]; the outgoing sum is
    identically 1 per head by softmax normalization and carries no signal.
    Special-token positions are dropped from the output.
    """
    incoming = attn.values.sum(axis=(0, 1))  # length J
    specials = set(special_positions)
    scores = []
    for pos in range(attn.sequence_length):
        if pos in specials:
            continue
        if pos not in token_lines:
            raise RelevanceError(f"no line mapping for content position {pos}")
        scores.append((token_lines[pos], float(incoming[pos])))
    return TokenRelevanceRecord(
        function_id=attn.function_id,
        method=method,
        predicted_label=predicted_label,
        scores=tuple(scores),
    )


def aggregate_lines(record, line_count):
    """Sum raw token scores per line; token-free lines get 0."""
    raw = np.zeros(line_count, dtype=np.float64)
    for line, score in record.scores:
        if not (0 <= line < line_count):
            raise RelevanceError(
                f"{record.function_id}: token line {line} outside 0..{line_count - 1}"
            )
        raw[line] += score
    return raw


def rescale(raw, function_id="", method=""):
    """Min-max rescale into [0, 1]; a constant vector maps to all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < 1:
        raise RelevanceError("cannot rescale an empty vector")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        values = np.zeros_like(raw)
    else:
        values = (raw - lo) / (hi - lo)
    return LineRelevanceVector(function_id=function_id, values=values, method=method)


def line_relevance(record, line_count):
    """Aggregate a token record straight to its rescaled line vector."""
    raw = aggregate_lines(record, line_count)
    return rescale(raw, function_id=record.function_id, method=record.method)


def absolute_variant(record):
    """Replace each raw token score by its absolute value."""
    return replace(
        record,
        method=record.method + "-abs",
        scores=tuple((line, abs(score)) for line, score in record.scores),
    )


# ---------------------------------------------------------------------------
# Interchange JSONL
# ---------------------------------------------------------------------------

def record_to_obj(record):
    return {
        "id": record.function_id,
        "method": record.method,
        "predicted_label": record.predicted_label,
        "tokens": [{"line": line, "score": score} for line, score in record.scores],
    }


def record_from_obj(obj):
    for key in ("id", "method", "predicted_label", "tokens"):
        if key not in obj:
            raise RelevanceError(f"interchange record missing {key!r}")
    if obj["predicted_label"] not in (0, 1):
        raise RelevanceError("predicted_label must be 0 or 1")
    scores = []
    for tok in obj["tokens"]:
        if "line" not in tok or "score" not in tok:
            raise RelevanceError("token entry must carry line and score")
        scores.append((int(tok["line"]), float(tok["score"])))
    return TokenRelevanceRecord(
        function_id=obj["id"],
        method=obj["method"],
        predicted_label=int(obj["predicted_label"]),
        scores=tuple(scores),
    )


def attention_tensor_from_obj(obj):
    """Parse the attention wire form (flat row-major values)."""
    heads, seq_len = obj["heads"], obj["seq_len"]
    values = np.asarray(obj["attn"], dtype=np.float64).reshape(heads, seq_len, seq_len)
    tensor = AttentionTensor(
        function_id=obj["id"],
        layer_index=obj["layer"],
        values=values,
        head_count=heads,
        sequence_length=seq_len,
    )
    token_lines = {
        pos: line
        for pos, line in enumerate(obj["token_lines"])
        if pos not in set(obj["special_positions"])
    }
    return tensor, token_lines, obj["special_positions"]


def write_records(records, path):
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record_to_obj(record)) + "\n")


def read_records(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_from_obj(json.loads(line)))
    return out
