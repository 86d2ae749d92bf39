"""Lexicon sentiment and the stylometric writing features used for
authorship clustering."""

from __future__ import annotations

import math
import re
from dataclasses import astuple, dataclass, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import IO, Mapping

from .errors import ConfigError, UndefinedInputError

NEGATORS = frozenset({"not", "no", "never"})
PUNCTUATION = frozenset(".,;:!?'\"()-[]{}")

# Alphanumeric runs; an inner apostrophe keeps contractions like "don't" whole
# so the "n't" negator survives tokenisation.
_TOKEN_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*")
_SENTENCE_SPLIT_RE = re.compile(r"[.?!]+")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, tuple[float, float]]

    def __post_init__(self) -> None:
        for token, (polarity, subjectivity) in self.entries.items():
            if not token or token != token.lower():
                raise ConfigError(f"lexicon token {token!r} must be non-empty lowercase")
            if not -1.0 <= polarity <= 1.0:
                raise ConfigError(f"lexicon {token!r}: polarity {polarity} outside [-1, 1]")
            if not 0.0 <= subjectivity <= 1.0:
                raise ConfigError(f"lexicon {token!r}: subjectivity {subjectivity} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.entries)


def parse_lexicon(text: str) -> Lexicon:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ConfigError(f"lexicon line {lineno}: expected token<TAB>polarity<TAB>subjectivity")
        try:
            entries[parts[0].strip()] = (float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ConfigError(f"lexicon line {lineno}: {exc}") from exc
    return Lexicon(entries)


def load_lexicon(source: str | Path | IO[str] | None = None) -> Lexicon:
    """Load a TSV lexicon; with no argument, the bundled default."""
    if source is None:
        return default_lexicon()
    if isinstance(source, (str, Path)):
        return parse_lexicon(Path(source).read_text(encoding="utf-8"))
    return parse_lexicon(source.read())


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    text = resources.files("sttwatch").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
    return parse_lexicon(text)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.replace("’", "'").lower())


def _is_negator(token: str) -> bool:
    return token in NEGATORS or token.endswith("n't")


def sentiment(text: str, lexicon: Lexicon | None = None) -> tuple[float, float]:
    """Mean (polarity, subjectivity) over lexicon hits.

    A negator flips the polarity of the next token found in the lexicon.
    """
    lexicon = lexicon or default_lexicon()
    entries = lexicon.entries
    polarities: list[float] = []
    subjectivities: list[float] = []
    negate = False
    for token in tokenize(text):
        if _is_negator(token):
            negate = True
            continue
        hit = entries.get(token)
        if hit is None:
            continue
        polarity, subjectivity = hit
        polarities.append(-polarity if negate else polarity)
        subjectivities.append(subjectivity)
        negate = False
    if not polarities:
        return 0.0, 0.0
    return (math.fsum(polarities) / len(polarities),
            math.fsum(subjectivities) / len(subjectivities))


def count_sentences(text: str) -> int:
    segments = [s for s in _SENTENCE_SPLIT_RE.split(text) if _TOKEN_RE.search(s.lower())]
    return max(1, len(segments))


def count_syllables(word: str) -> int:
    word = word.lower()
    n = len(_VOWEL_GROUP_RE.findall(word))
    if n > 1 and word.endswith("e"):
        n -= 1
    return max(1, n)


def flesch_readability(text: str) -> float:
    """Flesch reading ease: 206.835 - 1.015 * words/sentence - 84.6 * syllables/word."""
    words = tokenize(text)
    if not words:
        raise UndefinedInputError("readability needs at least one word")
    sentences = count_sentences(text)
    syllables = sum(count_syllables(w) for w in words)
    return 206.835 - 1.015 * (len(words) / sentences) - 84.6 * (syllables / len(words))


@dataclass(frozen=True)
class StyleFeatures:
    polarity: float
    subjectivity: float
    lexical_richness: float
    punctuation_frequency: float
    readability: float
    avg_sentence_length: float
    degenerate: bool = False

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if f.name != "degenerate")

    def vector(self) -> tuple[float, ...]:
        return astuple(self)[:-1]


def style_features(text: str, lexicon: Lexicon | None = None) -> StyleFeatures:
    tokens = tokenize(text)
    if not tokens:
        return StyleFeatures(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, degenerate=True)
    polarity, subjectivity = sentiment(text, lexicon)
    punct = sum(1 for ch in text if ch in PUNCTUATION)
    return StyleFeatures(
        polarity=polarity,
        subjectivity=subjectivity,
        lexical_richness=len(set(tokens)) / len(tokens),
        punctuation_frequency=punct / len(tokens),
        readability=flesch_readability(text),
        avg_sentence_length=len(tokens) / count_sentences(text),
    )
