##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides tokenization, the vocabulary and the BLEU score.
# BLEU is both the evaluation metric of generated texts and the text
# side similarity of the group topology-preservation loss.
#
# Tokens are lower-case words and single punctuation characters. The
# vocabulary reserves the ids 0..3 for PAD, BOS, EOS and UNK.
#
##########################################################################

import collections
import math
import re
import typing
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, ParseError
from .numcore import Matrix

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

# Additive smoothing constant of zero-match n-gram precisions
SMOOTHING_EPS = 0.1

_TOKEN = re.compile(r"[^\W_]+(?:'[^\W\d_]+)?|\S")


def split_words(text: str) -> typing.List[str]:
    """Split text into lower-case words of Unicode letters and digits and
    single punctuation characters."""
    return _TOKEN.findall(text.lower())


##########################################################################
# Vocabulary and token sequences


class Vocabulary:
    """Bijection between token strings and ids."""

    def __init__(self, tokens: typing.Iterable[str] = ()):
        self._ids = {t: i for i, t in enumerate(RESERVED)}
        self._tokens = list(RESERVED)
        for token in tokens:
            if token not in self._ids:
                self._ids[token] = len(self._tokens)
                self._tokens.append(token)

    @classmethod
    def build(cls, texts: typing.Iterable[str],
              min_count: int = 1) -> "Vocabulary":
        """Build a vocabulary from raw texts. Tokens are sorted, so the
        result does not depend on the order of the texts."""
        counts = collections.Counter()
        for text in texts:
            counts.update(split_words(text))
        return cls(sorted(t for t, c in counts.items()
                          if c >= min_count and t not in RESERVED))

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def token(self, index: int) -> str:
        return self._tokens[index]

    def tokens(self) -> typing.List[str]:
        """Return all non-reserved tokens in id order."""
        return self._tokens[len(RESERVED):]

    def dumps(self) -> str:
        """Line-per-token text form; the id of a token is its line number
        plus 4."""
        return "".join(t + "\n" for t in self.tokens())

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        tokens = text.split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        for i, token in enumerate(tokens):
            if not token or token in RESERVED:
                raise ParseError("Invalid vocabulary token in line %d!"
                                 % (i + 1), line=i + 1)
        if len(set(tokens)) != len(tokens):
            raise ParseError("Duplicate vocabulary token!")
        return cls(tokens)


@dataclass
class TokenSequence:
    """Tokenized text. The ids include the enclosing BOS and EOS."""

    tokens: typing.List[int]
    raw: typing.List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    def words(self, vocab: Vocabulary) -> typing.List[str]:
        """Vocabulary view of the content tokens, UNK included."""
        return [vocab.token(i) for i in self.tokens
                if i not in (PAD, BOS, EOS)]


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """Tokenize text. Unknown tokens map to UNK; blank text yields the
    sequence [BOS, EOS] with an empty raw list."""
    raw = split_words(text)
    return TokenSequence([BOS] + [vocab.id(t) for t in raw] + [EOS], raw)


def from_ids(ids: typing.Sequence[int], vocab: Vocabulary) -> TokenSequence:
    """Build a sequence from generated ids. Raw tokens are the vocabulary
    strings of all content ids."""
    ids = list(ids)
    if not ids or ids[0] != BOS:
        ids = [BOS] + ids
    if ids[-1] != EOS:
        ids = ids + [EOS]
    seq = TokenSequence(ids)
    seq.raw = seq.words(vocab)
    return seq


def detokenize(seq: TokenSequence) -> str:
    return " ".join(seq.raw)


##########################################################################
# BLEU


def _units(seq) -> typing.List[str]:
    if isinstance(seq, TokenSequence):
        return seq.raw
    if isinstance(seq, str):
        return split_words(seq)
    return list(seq)


def _ngram_counts(units, max_n: int) -> typing.List[collections.Counter]:
    return [
        collections.Counter(
            tuple(units[i:i + n]) for i in range(len(units) - n + 1)
        )
        for n in range(1, max_n + 1)
    ]


def _match_stats(hyp_counts, ref_counts):
    """Clipped matches and totals per n-gram order."""
    matches = [sum((h & r).values()) for h, r in zip(hyp_counts, ref_counts)]
    totals = [sum(h.values()) for h in hyp_counts]
    return matches, totals


def _combine(matches, totals, hyp_len: int, ref_len: int,
             smoothing: bool) -> float:
    if hyp_len == 0 or ref_len == 0:
        return 0.0
    log_p = 0.0
    for match, total in zip(matches, totals):
        if match == 0:
            if not smoothing:
                return 0.0
            p = (match + SMOOTHING_EPS) / (total + SMOOTHING_EPS)
        else:
            p = match / total
        log_p += math.log(p)
    log_p /= len(matches)
    if hyp_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def bleu(hyp, ref, max_n: int = 4, smoothing: bool = False) -> float:
    """Sentence BLEU of a hypothesis against one reference.

    Geometric mean of the clipped n-gram precisions up to order max_n times
    the brevity penalty exp(1 - r/c), which applies when the hypothesis is
    not longer than the reference. With smoothing, zero-match precisions
    become (count + 0.1) / (total + 0.1). An order without any hypothesis
    n-gram then has precision 1, so a hypothesis shorter than max_n
    tokens is scored by its lower orders and the brevity penalty.

    Args:
        hyp: TokenSequence, raw string or list of token strings.
        ref: Same as hyp.
        max_n: Highest n-gram order.
        smoothing: Enable additive smoothing.

    Returns:
        float: Score in [0, 1]. Empty hypothesis or reference score 0.
    """
    if max_n < 1:
        raise InvalidInput("BLEU order must be at least 1!")
    h, r = _units(hyp), _units(ref)
    if not h or not r:
        return 0.0
    matches, totals = _match_stats(_ngram_counts(h, max_n),
                                   _ngram_counts(r, max_n))
    return _combine(matches, totals, len(h), len(r), smoothing)


def symmetric_bleu(a, b, max_n: int = 4, smoothing: bool = False) -> float:
    """Mean of BLEU in both argument orders."""
    return 0.5 * (bleu(a, b, max_n, smoothing) + bleu(b, a, max_n, smoothing))


def corpus_bleu(pairs: typing.Sequence[typing.Tuple[typing.Any, typing.Any]],
                max_n: int = 4, smoothing: bool = True) -> float:
    """Corpus BLEU from pooled n-gram statistics, scaled to [0, 100].

    Args:
        pairs: List of (hypothesis, reference) tuples.
        max_n: Highest n-gram order.
        smoothing: Enable additive smoothing of the pooled precisions.

    Returns:
        float: 100 times the pooled BLEU score.
    """
    if not pairs:
        raise InvalidInput("Corpus BLEU of an empty corpus!")
    if max_n < 1:
        raise InvalidInput("BLEU order must be at least 1!")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        h, r = _units(hyp), _units(ref)
        hyp_len += len(h)
        ref_len += len(r)
        m, t = _match_stats(_ngram_counts(h, max_n), _ngram_counts(r, max_n))
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
    return 100.0 * _combine(matches, totals, hyp_len, ref_len, smoothing)


class BleuTable:
    """Cached n-gram counts of a fixed list of texts for repeated BLEU
    evaluation between its members."""

    def __init__(self, texts: typing.Sequence, max_n: int = 4,
                 smoothing: bool = True):
        if max_n < 1:
            raise InvalidInput("BLEU order must be at least 1!")
        self.max_n = max_n
        self.smoothing = smoothing
        self._units = [_units(t) for t in texts]
        self._counts = [_ngram_counts(u, max_n) for u in self._units]

    def __len__(self):
        return len(self._units)

    def score(self, i: int, j: int) -> float:
        """BLEU of text i as hypothesis against text j as reference."""
        h, r = self._units[i], self._units[j]
        if not h or not r:
            return 0.0
        matches, totals = _match_stats(self._counts[i], self._counts[j])
        return _combine(matches, totals, len(h), len(r), self.smoothing)


def pairwise_bleu_matrix(texts: typing.Sequence, max_n: int = 4,
                         smoothing: bool = True) -> Matrix:
    """Matrix of BLEU(texts[i] as hypothesis, texts[j] as reference).

    The diagonal is exactly 1. The matrix is generally asymmetric due to
    the brevity penalty.
    """
    if len(texts) < 2:
        raise InvalidInput("Pairwise BLEU needs at least two texts!")
    table = BleuTable(texts, max_n, smoothing)
    n = len(texts)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = table.score(i, j)
    return Matrix(out)
