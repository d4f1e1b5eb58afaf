"""Ground-truth vulnerable lines from a function and its fixed version.

The vulnerable lines of the pre-fix function are exactly the lines deleted
(or replaced, which the edit script records as a delete) when diffing
against the fix. Lines are compared with trailing whitespace stripped so
cosmetic churn is not flagged.
"""

import json
import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)

KEEP = "keep"
DELETE = "delete"
INSERT = "insert"


@dataclass(frozen=True)
class GroundTruth:
    function_id: str
    vulnerable_lines: frozenset  # 0-based line indices of the vulnerable function
    line_count: int

    def __post_init__(self):
        if any(not (0 <= i < self.line_count) for i in self.vulnerable_lines):
            raise ValueError("vulnerable line index out of range")


@dataclass(frozen=True)
class FunctionPair:
    function_id: str
    vulnerable_code: str
    fixed_code: str

    def __post_init__(self):
        if not self.vulnerable_code or not self.fixed_code:
            raise ValueError("both code versions must be non-empty")


def line_diff(a, b):
    """Minimal LCS edit script between two line sequences.

    Returns a list of (op, index_in_a_or_b, line) entries where op is
    "keep" (index into a), "delete" (index into a) or "insert" (index
    into b). At equal cost, deletes are emitted before inserts and the
    earliest position is preferred, so the script is deterministic.
    """
    n, m = len(a), len(b)
    # dp[i][j] = LCS length of a[i:], b[j:]
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = dp[i], dp[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = max(nxt[j], row[j + 1])
    script = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j] and dp[i][j] == dp[i + 1][j + 1] + 1:
            script.append((KEEP, i, a[i]))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            script.append((DELETE, i, a[i]))
            i += 1
        else:
            script.append((INSERT, j, b[j]))
            j += 1
    for k in range(i, n):
        script.append((DELETE, k, a[k]))
    for k in range(j, m):
        script.append((INSERT, k, b[k]))
    return script


def _lines(code):
    raw = code.split("\n")
    if raw and raw[-1] == "":
        raw = raw[:-1]
    return raw


def extract_ground_truth(pair):
    """Flag the pre-fix lines deleted or replaced by the fix."""
    a = [ln.rstrip() for ln in _lines(pair.vulnerable_code)]
    b = [ln.rstrip() for ln in _lines(pair.fixed_code)]
    if not a or not b:
        raise ValueError(f"{pair.function_id}: code must have at least one line")
    deleted = {idx for op, idx, _ in line_diff(a, b) if op == DELETE}
    if not deleted:
        log.warning("%s: no flagged lines (identity diff or pure insertion)", pair.function_id)
    return GroundTruth(
        function_id=pair.function_id,
        vulnerable_lines=frozenset(deleted),
        line_count=len(a),
    )


def read_pairs(path):
    """Load FunctionPair records from JSONL: {"id","code","label","fixed_code"}.

    Yields (line_number, pair_or_none, warning_or_none). Records missing a
    required field yield a warning; malformed JSON raises with the line number.
    """
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            missing = [k for k in ("id", "code", "fixed_code") if k not in obj]
            if missing:
                yield lineno, None, f"missing fields: {', '.join(missing)}"
                continue
            yield lineno, FunctionPair(obj["id"], obj["code"], obj["fixed_code"]), None


def write_ground_truth(records, path):
    with open(path, "w") as fh:
        for gt in records:
            fh.write(
                json.dumps(
                    {
                        "id": gt.function_id,
                        "vulnerable_lines": sorted(gt.vulnerable_lines),
                        "line_count": gt.line_count,
                    }
                )
                + "\n"
            )


def read_ground_truth(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj["id"] in out:
                raise ValueError(f"duplicate function id {obj['id']!r}")
            out[obj["id"]] = GroundTruth(
                function_id=obj["id"],
                vulnerable_lines=frozenset(obj["vulnerable_lines"]),
                line_count=obj["line_count"],
            )
    return out
