"""Text vocabulary: round trips, byte fallback, reserved id layout."""

import pytest

from seqforge.vocab import Vocabulary


@pytest.fixture()
def vocab():
    lines = ["the cat sat on the mat", "the dog sat", "a cat and a dog"]
    return Vocabulary.build(lines, max_words=6, num_sentinels=4)


def test_most_frequent_words_in_table(vocab):
    assert "the" in vocab.words
    assert len(vocab.words) == 6


def test_known_words_round_trip(vocab):
    text = "the cat sat"
    assert vocab.decode(vocab.encode(text)) == text


def test_unknown_words_fall_back_to_bytes(vocab):
    text = "the zebra sat"
    ids = vocab.encode(text)
    assert vocab.decode(ids) == text
    assert len(ids) > 3  # 'zebra' became bytes


def test_unicode_round_trip(vocab):
    assert vocab.decode(vocab.encode("naïve café")) == "naïve café"


def test_reserved_ids_at_top(vocab):
    assert vocab.separator_id == 3 + 256 + 6
    assert vocab.sentinel_base_id == vocab.separator_id + 1
    assert vocab.size == vocab.sentinel_base_id + 4
    ids = vocab.encode("the cat zebra")
    assert all(t < vocab.separator_id for t in ids)


def test_sentinels_render_distinctly(vocab):
    text = vocab.decode([vocab.sentinel_base_id, vocab.sentinel_base_id + 1])
    assert text == "<extra_0> <extra_1>"


def test_duplicate_words_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        Vocabulary(["a", "a"])
