import json

import pytest
from hypothesis import given, settings, strategies as st

from vulnalign.tokenizer import (
    TokenizerError,
    Vocabulary,
    count_lines,
    decode,
    encode,
    train_bpe,
)

BYTE_VOCAB = Vocabulary(merges=())


def test_train_merges_most_frequent_pair_first():
    # pair counts on "aaab": (a,a) x2, (a,b) x1
    vocab = train_bpe(["aaab"], target_vocab_size=260)
    assert vocab.merges[0] == ((97,), (97,))


def test_train_never_merges_across_newline():
    vocab = train_bpe(["x\ny"] * 50, target_vocab_size=300)
    for left, right in vocab.merges:
        joined = left + right
        assert 10 not in joined or len(joined) == 1


def test_train_distinct_bytes_yields_no_merges():
    vocab = train_bpe(["abcdef"], target_vocab_size=259)
    assert vocab.merges == ()
    assert vocab.size == 259


def test_train_rejects_empty_corpus():
    with pytest.raises(TokenizerError):
        train_bpe([], target_vocab_size=300)


def test_train_rejects_too_small_target():
    with pytest.raises(TokenizerError):
        train_bpe(["abc"], target_vocab_size=100)


def test_encode_byte_vocab_line_indices():
    tf = encode(BYTE_VOCAB, "ab\ncd")
    # newline is its own token on the line it terminates
    assert tf.token_lines == [0, 0, 0, 1, 1]
    assert tf.line_count == 2
    assert decode(BYTE_VOCAB, tf.token_ids) == "ab\ncd"


def test_encode_truncates_at_budget():
    tf = encode(BYTE_VOCAB, "x" * 600, budget=510)
    assert len(tf.tokens) == 510
    assert tf.truncated
    assert tf.line_count == 1


def test_encode_empty_input():
    tf = encode(BYTE_VOCAB, "")
    assert tf.tokens == ()
    assert tf.line_count == 0
    assert not tf.truncated


def test_decode_empty_and_specials():
    assert decode(BYTE_VOCAB, []) == ""
    assert decode(BYTE_VOCAB, [BYTE_VOCAB.bos_id, 97, BYTE_VOCAB.eos_id]) == "a"


def test_decode_unknown_id_raises():
    with pytest.raises(TokenizerError):
        decode(BYTE_VOCAB, [5000])


def test_round_trip_with_merges():
    corpus = ["int a = 0;\nreturn a;\n", "int b = 1;\nreturn b;\n"]
    vocab = train_bpe(corpus, target_vocab_size=280)
    assert len(vocab.merges) == 280 - 259
    for text in corpus + ["int c = 2;"]:
        tf = encode(vocab, text)
        assert decode(vocab, tf.token_ids) == text


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=0, max_size=200))
def test_round_trip_property(text):
    tf = encode(BYTE_VOCAB, text, budget=10_000)
    assert not tf.truncated
    assert decode(BYTE_VOCAB, tf.token_ids) == text


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="ab\n", min_size=0, max_size=80))
def test_line_confinement_property(text):
    vocab = train_bpe(["aabb\naabb\n"], target_vocab_size=265)
    tf = encode(vocab, text, budget=10_000)
    data = text.encode("utf-8")
    for token in tf.tokens:
        start, stop = token.byte_span
        first_line = data[:start].count(b"\n")
        span = data[start:stop]
        if span == b"\n":
            assert token.line_index == first_line
        else:
            assert b"\n" not in span
            assert token.line_index == first_line
    assert tf.token_lines == sorted(tf.token_lines)


def test_determinism():
    corpus = ["foo bar foo bar\n", "foo baz\n"]
    v1 = train_bpe(corpus, target_vocab_size=270)
    v2 = train_bpe(corpus, target_vocab_size=270)
    assert v1.merges == v2.merges
    a = encode(v1, corpus[0])
    b = encode(v2, corpus[0])
    assert a.token_ids == b.token_ids


def test_truncation_marker_matches_untruncated_count():
    text = "abcdefgh"
    for budget in (1, 4, 8, 9):
        tf = encode(BYTE_VOCAB, text, budget=budget)
        assert tf.truncated == (len(text) > budget)
        assert len(tf.tokens) == min(len(text), budget)


def test_vocab_json_round_trip(tmp_path):
    vocab = train_bpe(["hello world\nhello there\n"], target_vocab_size=270)
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded == vocab
    obj = json.loads(vocab.to_json())
    assert obj["base_size"] == 256
    assert set(obj["specials"]) == {"bos", "eos", "pad"}


def test_count_lines_convention():
    assert count_lines("") == 0
    assert count_lines("a") == 1
    assert count_lines("a\n") == 1
    assert count_lines("a\nb") == 2
    assert count_lines("a\nb\n") == 2
