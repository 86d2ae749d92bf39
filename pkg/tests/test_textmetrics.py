from __future__ import annotations

import io

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from sttwatch.errors import ConfigError, UndefinedInputError
from sttwatch.textmetrics import (Lexicon, count_syllables, default_lexicon, flesch_readability,
                                  load_lexicon, sentiment, style_features, tokenize)

SMALL = Lexicon({"good": (0.7, 0.6), "terrible": (-0.8, 0.9)})


def flesch_by_hand(words: int, sentences: int, syllables: int) -> float:
    return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words)


def test_sentiment_hand_means():
    assert sentiment("") == (0.0, 0.0)
    pol, subj = sentiment("good good terrible", SMALL)
    assert pol == pytest.approx(0.2)
    assert subj == pytest.approx(0.7)


@pytest.mark.parametrize("text", ["not good", "never good", "it isn't good", "don't good"])
def test_negator_flips_next_hit(text):
    assert sentiment(text, SMALL) == pytest.approx((-0.7, 0.6))


def test_negation_applies_to_next_match_only():
    assert sentiment("not really good terrible", SMALL)[0] == pytest.approx((-0.7 - 0.8) / 2)


def test_tokenizer_keeps_contractions():
    assert tokenize("Don’t PANIC, it's fine_ok") == ["don't", "panic", "it's", "fine", "ok"]


@pytest.mark.parametrize("text,expected", [
    ("Go.", flesch_by_hand(1, 1, 1)),
    ("The cat sat.", flesch_by_hand(3, 1, 3)),
])
def test_flesch_hand_values(text, expected):
    assert flesch_readability(text) == pytest.approx(expected, abs=0.01)


def test_flesch_reference_values():
    assert flesch_readability("Go.") == pytest.approx(121.22, abs=0.01)
    assert flesch_readability("The cat sat.") == pytest.approx(119.19, abs=0.01)


def test_flesch_undefined_without_words():
    with pytest.raises(UndefinedInputError):
        flesch_readability("")
    with pytest.raises(UndefinedInputError):
        flesch_readability("?!")


@pytest.mark.parametrize("word,n", [("cat", 1), ("make", 1), ("the", 1), ("reading", 2),
                                    ("rhythm", 1), ("decoder", 3), ("queue", 1), ("b", 1)])
def test_syllable_heuristic(word, n):
    assert count_syllables(word) == n


def test_style_feature_hand_counts():
    assert style_features("aa aa aa").lexical_richness == pytest.approx(1 / 3)
    f = style_features("Hi! Hi! Hi!")
    assert f.avg_sentence_length == 1.0
    assert f.punctuation_frequency == 1.0
    empty = style_features("")
    assert empty.degenerate and empty.vector() == (0.0,) * 6


def test_lexicon_validation_and_loading(tmp_path):
    with pytest.raises(ConfigError):
        Lexicon({"Bad": (0.1, 0.1)})
    with pytest.raises(ConfigError):
        Lexicon({"x": (1.5, 0.1)})
    with pytest.raises(ConfigError):
        load_lexicon(io.StringIO("good\t0.5\n"))
    path = tmp_path / "lex.tsv"
    path.write_text("# test\ngood\t0.5\t0.4\n")
    assert load_lexicon(path).entries == {"good": (0.5, 0.4)}
    lex = default_lexicon()
    assert 250 <= len(lex) <= 400
    assert not {"not", "no", "never"} & set(lex.entries)


words = st.sampled_from(["good", "bad", "great", "slow", "patch", "the", "fine", "broken",
                         "not", "never", "isn't", "release", "!", ",", "."])


@given(st.lists(words, max_size=30))
def test_sentiment_ranges(tokens):
    pol, subj = sentiment(" ".join(tokens))
    assert -1.0 <= pol <= 1.0
    assert 0.0 <= subj <= 1.0


@given(st.lists(words.filter(lambda w: w not in ("not", "never", "isn't")), min_size=1,
                max_size=20), st.randoms())
def test_permutation_invariance(tokens, rnd):
    shuffled = tokens[:]
    rnd.shuffle(shuffled)
    a, b = style_features(" ".join(tokens)), style_features(" ".join(shuffled))
    assert a.lexical_richness == pytest.approx(b.lexical_richness)
    assert a.punctuation_frequency == pytest.approx(b.punctuation_frequency)
    assert sentiment(" ".join(tokens)) == pytest.approx(sentiment(" ".join(shuffled)))


@given(st.text(min_size=1, max_size=80))
def test_duplication_never_raises_richness(text):
    assume(tokenize(text))
    once = style_features(text).lexical_richness
    twice = style_features(text + " " + text).lexical_richness
    assert twice <= once + 1e-12


@given(st.integers(1, 30), st.integers(1, 30))
def test_flesch_decreases_with_sentence_length(n, extra):
    # one-syllable words only, so syllables per word stays at 1
    short = flesch_readability(" ".join(["cat"] * n) + ".")
    longer = flesch_readability(" ".join(["cat"] * (n + extra)) + ".")
    assert longer < short
