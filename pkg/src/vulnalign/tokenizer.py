"""Byte-level BPE tokenizer with per-token line provenance.

Every token records the 0-based source line it came from, and merges never
cross a newline byte, so the token-to-line map needed by the line-relevance
aggregation is exact by construction.
"""

import json
from collections import Counter
from dataclasses import dataclass, field

NEWLINE = 10  # ord("\n")
DEFAULT_BUDGET = 510


class TokenizerError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """An ordered list of merge rules over base bytes, plus special ids.

    Symbols are tuples of byte values. Base bytes occupy ids 0..255,
    specials come next, and merged symbols follow in rule order.
    """

    merges: tuple  # ordered ((left_bytes, right_bytes), ...) as byte tuples
    bos_id: int = 256
    eos_id: int = 257
    pad_id: int = 258

    BASE_SIZE = 256
    N_SPECIALS = 3

    def __post_init__(self):
        for left, right in self.merges:
            joined = left + right
            if NEWLINE in joined and len(joined) > 1:
                raise TokenizerError("merge rule would join bytes across a newline")
        specials = {self.bos_id, self.eos_id, self.pad_id}
        if len(specials) != self.N_SPECIALS or min(specials) < self.BASE_SIZE:
            raise TokenizerError("special ids must be distinct and outside base bytes")

    @property
    def size(self):
        return self.BASE_SIZE + self.N_SPECIALS + len(self.merges)

    @property
    def special_ids(self):
        return (self.bos_id, self.eos_id, self.pad_id)

    def symbol_of(self, token_id):
        """Byte expansion of a content token id."""
        if 0 <= token_id < self.BASE_SIZE:
            return (token_id,)
        first_merged = self.BASE_SIZE + self.N_SPECIALS
        k = token_id - first_merged
        if 0 <= k < len(self.merges):
            left, right = self.merges[k]
            return left + right
        raise TokenizerError(f"unknown token id {token_id}")

    def id_of(self, symbol):
        return self._symbol_ids()[symbol]

    def _symbol_ids(self):
        if not hasattr(self, "_symbol_id_cache"):
            table = {(b,): b for b in range(self.BASE_SIZE)}
            first_merged = self.BASE_SIZE + self.N_SPECIALS
            for k, (left, right) in enumerate(self.merges):
                table[left + right] = first_merged + k
            object.__setattr__(self, "_symbol_id_cache", table)
        return self._symbol_id_cache

    def to_json(self):
        return json.dumps(
            {
                "base_size": self.BASE_SIZE,
                "specials": {"bos": self.bos_id, "eos": self.eos_id, "pad": self.pad_id},
                "merges": [[list(left), list(right)] for left, right in self.merges],
            }
        )

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        if obj.get("base_size") != cls.BASE_SIZE:
            raise TokenizerError("unsupported base size")
        merges = tuple(
            (tuple(left), tuple(right)) for left, right in obj["merges"]
        )
        sp = obj["specials"]
        return cls(merges=merges, bos_id=sp["bos"], eos_id=sp["eos"], pad_id=sp["pad"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class Token:
    id: int
    byte_span: tuple  # half-open (start, stop) into the utf-8 source bytes
    line_index: int


@dataclass(frozen=True)
class TokenizedFunction:
    function_id: str
    tokens: tuple
    line_count: int
    truncated: bool
    max_content_tokens: int = DEFAULT_BUDGET

    @property
    def token_ids(self):
        return [t.id for t in self.tokens]

    @property
    def token_lines(self):
        return [t.line_index for t in self.tokens]


def count_lines(code):
    """Number of newline-delimited lines; a trailing newline does not open a new line."""
    if not code:
        return 0
    n = code.count("\n")
    return n if code.endswith("\n") else n + 1


def _segments(data):
    """Split a byte string into (start, bytes, line_index) runs.

    Newline bytes become their own single-byte segment on the line they
    terminate; merges are confined to the runs between them.
    """
    runs = []
    line = 0
    start = 0
    for i, b in enumerate(data):
        if b == NEWLINE:
            if i > start:
                runs.append((start, data[start:i], line))
            runs.append((i, bytes([NEWLINE]), line))
            line += 1
            start = i + 1
    if start < len(data):
        runs.append((start, data[start:], line))
    return runs


def train_bpe(corpus, target_vocab_size=8192):
    """Learn merge rules greedily by pair frequency, never across newlines.

    Ties are broken by the lexicographically smallest pair of byte
    expansions, so training is deterministic.
    """
    corpus = list(corpus)
    if not corpus:
        raise TokenizerError("corpus is empty")
    n_merges = target_vocab_size - Vocabulary.BASE_SIZE - Vocabulary.N_SPECIALS
    if n_merges < 0:
        raise TokenizerError(
            f"target vocab size {target_vocab_size} cannot fit base bytes and specials"
        )

    # Sequences of byte-tuple symbols; newline runs are excluded outright so
    # no pair involving a newline is ever counted.
    sequences = []
    for text in corpus:
        for _, run, _ in _segments(text.encode("utf-8")):
            if run != b"\n":
                sequences.append([(b,) for b in run])

    merges = []
    for _ in range(n_merges):
        counts = Counter()
        for seq in sequences:
            for a, b in zip(seq, seq[1:]):
                counts[(a, b)] += 1
        if not counts:
            break
        best_count = max(counts.values())
        best = min(p for p, c in counts.items() if c == best_count)
        merges.append(best)
        sequences = [_apply_merge(seq, best) for seq in sequences]

    return Vocabulary(merges=tuple(merges))


def _apply_merge(symbols, pair):
    left, right = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def encode(vocab, code, budget=DEFAULT_BUDGET, function_id=""):
    """Encode source text, applying merges in rule order within each line."""
    if budget < 1:
        raise TokenizerError("budget must be at least 1")
    data = code.encode("utf-8")
    symbol_ids = vocab._symbol_ids()

    tokens = []
    for run_start, run, line in _segments(data):
        symbols = [(b,) for b in run]
        if run != b"\n":
            for pair in vocab.merges:
                symbols = _apply_merge(symbols, pair)
        offset = run_start
        for sym in symbols:
            tokens.append(Token(symbol_ids[sym], (offset, offset + len(sym)), line))
            offset += len(sym)

    truncated = len(tokens) > budget
    return TokenizedFunction(
        function_id=function_id,
        tokens=tuple(tokens[:budget]),
        line_count=count_lines(code),
        truncated=truncated,
        max_content_tokens=budget,
    )


def decode(vocab, token_ids):
    """Concatenate byte expansions of content tokens; specials are skipped."""
    specials = set(vocab.special_ids)
    out = bytearray()
    for tid in token_ids:
        if tid in specials:
            continue
        out.extend(vocab.symbol_of(tid))
    return out.decode("utf-8")
