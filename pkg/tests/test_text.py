"""Vocabulary contracts: frequency ranking, specials, truncation, the
27-character filter, and exact char-mode roundtrips."""

import numpy as np
import pytest

from ranlab.errors import ConfigError, IngestionError
from ranlab.text import EOS_TOKEN, UNK_TOKEN, Vocabulary, build_vocab, text8_filter


def test_word_vocab_frequency_order():
    v = build_vocab("a b a", "word")
    assert len(v) == 4
    assert v.token_to_id["a"] == 0
    assert v.token_to_id["b"] == 1
    assert v.token_to_id[UNK_TOKEN] == v.unk_id == 2
    assert v.token_to_id[EOS_TOKEN] == v.eos_id == 3


def test_word_vocab_breaks_ties_alphabetically():
    v = build_vocab("b a b a c", "word")
    assert [v.id_to_token[i] for i in range(3)] == ["a", "b", "c"]
    v = build_vocab("b a", "word")
    assert [v.id_to_token[i] for i in range(2)] == ["a", "b"]


def test_word_vocab_truncates_into_unk():
    v = build_vocab("a a a b b c", "word", max_size=4)
    assert len(v) == 4
    ids = v.encode("a c b")
    assert list(ids) == [v.token_to_id["a"], v.unk_id, v.token_to_id["b"]]


def test_word_encode_maps_newlines_to_eos():
    v = build_vocab("one two\nthree", "word")
    ids = v.encode("one two\nthree")
    assert list(ids) == [
        v.token_to_id["one"],
        v.token_to_id["two"],
        v.eos_id,
        v.token_to_id["three"],
    ]


def test_premarked_unknowns_fold_into_special():
    v = build_vocab(f"a {UNK_TOKEN} a {UNK_TOKEN}", "word")
    assert v.id_to_token.count(UNK_TOKEN) == 1
    assert list(v.encode(UNK_TOKEN)) == [v.unk_id]


def test_char_roundtrip_is_exact():
    text = "To be, or not to be\nthat is the question."
    v = build_vocab(text, "char")
    assert v.decode(v.encode(text)) == text
    assert v.unk_id is None and v.eos_id is None


def test_char_rejects_unseen_character():
    v = build_vocab("abc", "char")
    with pytest.raises(IngestionError):
        v.encode("abd")


def test_char_mode_rejects_max_size():
    with pytest.raises(ConfigError):
        build_vocab("abc", "char", max_size=2)


def test_filter_maps_everything_outside_az_to_space():
    assert text8_filter("Hello, World! 42") == "hello  world    "


def test_filtered_vocab_is_at_most_27_symbols():
    text = "The QUICK brown fox; jumps over 12 lazy dogs!\n" * 3
    v = build_vocab(text, "text8")
    assert len(v) <= 27
    assert all(c == " " or "a" <= c <= "z" for c in v.id_to_token)
    # encoding applies the same filter, so case differences vanish
    assert np.array_equal(v.encode("Fox!"), v.encode("fox "))


def test_empty_corpus_rejected():
    with pytest.raises(IngestionError):
        build_vocab("", "char")
    with pytest.raises(IngestionError):
        build_vocab("   \n  ", "word")


def test_payload_roundtrip_and_digest():
    v = build_vocab("a b a c\nd", "word", max_size=5)
    clone = Vocabulary.from_payload(v.payload())
    assert clone.digest() == v.digest()
    assert clone.token_to_id == v.token_to_id
    assert clone.unk_id == v.unk_id and clone.eos_id == v.eos_id
    other = build_vocab("a b a c\nd e", "word")
    assert other.digest() != v.digest()


def test_duplicate_tokens_rejected():
    with pytest.raises(IngestionError):
        Vocabulary(["a", "a"], "char")
