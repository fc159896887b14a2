import math
from unittest import TestCase

import numpy as np

from topoalign.errors import InvalidInput, ParseError
from topoalign.textmetric import (BOS, EOS, UNK, BleuTable, Vocabulary,
                                  bleu, corpus_bleu, detokenize, from_ids,
                                  pairwise_bleu_matrix, split_words,
                                  symmetric_bleu, tokenize)

# (hypothesis, reference, max_n, smoothing, expected score), computed by
# hand from clipped n-gram counts and the brevity penalty
BLEU_CASES = [
    ("the the the", "the cat", 1, False, 1.0 / 3.0),
    ("a b c d", "a b c d", 4, False, 1.0),
    ("a b", "c d", 1, False, 0.0),
    ("", "a b", 1, False, 0.0),
    ("a b", "", 1, True, 0.0),
    ("a b", "a b c d", 1, False, math.exp(-1.0)),
    ("a b c", "a b c", 2, False, 1.0),
    ("a b c d", "a b x d", 2, False, 0.5),
    ("a b c d", "a b x d", 1, False, 0.75),
    ("a b c d", "a b x d", 3, False, 0.0),
    ("a b c d", "a b x d", 3, True, (0.75 / 3.0 / 21.0) ** (1.0 / 3.0)),
    ("a a b", "a b b", 1, False, 2.0 / 3.0),
    ("a a b", "a b b", 2, False, math.sqrt(1.0 / 3.0)),
    ("a", "a b", 1, False, math.exp(-1.0)),
    ("a b c", "a b", 1, False, 2.0 / 3.0),
    ("The movement, allegro.", "the movement , allegro .", 4, False, 1.0),
    ("a b", "c d", 2, True, math.sqrt(0.1 / 2.1 * 0.1 / 1.1)),
    ("A B", "a b", 2, False, 1.0),
    (["x", "y", "x", "y"], ["x", "y"], 2, False, math.sqrt(1.0 / 6.0)),
    ("a b", "a b", 4, True, 1.0),
]


class TokenizeTest(TestCase):

    def test_split(self):
        self.assertEqual(split_words("The movement, allegro."),
                         ["the", "movement", ",", "allegro", "."])
        self.assertEqual(split_words(""), [])
        self.assertEqual(split_words("don't stop"), ["don't", "stop"])
        self.assertEqual(split_words("Élan du café_noir"),
                         ["élan", "du", "café", "_", "noir"])

    def test_tokenize(self):
        vocab = Vocabulary.build(["adagio"])
        seq = tokenize("Adagio cantabile", vocab)
        self.assertEqual(seq.raw, ["adagio", "cantabile"])
        self.assertEqual(seq.words(vocab), ["adagio", "<unk>"])
        self.assertEqual(seq.tokens, [BOS, vocab.id("adagio"), UNK, EOS])

    def test_blank(self):
        seq = tokenize("   ", Vocabulary())
        self.assertEqual(seq.raw, [])
        self.assertEqual(seq.tokens, [BOS, EOS])

    def test_from_ids(self):
        vocab = Vocabulary.build(["slow piano"])
        seq = from_ids([vocab.id("slow"), vocab.id("piano")], vocab)
        self.assertEqual(seq.tokens[0], BOS)
        self.assertEqual(seq.tokens[-1], EOS)
        self.assertEqual(detokenize(seq), "slow piano")
        self.assertEqual(from_ids([], vocab).tokens, [BOS, EOS])


class VocabularyTest(TestCase):

    def test_reserved_and_sorted(self):
        vocab = Vocabulary.build(["b a", "c a"])
        self.assertEqual(vocab.tokens(), ["a", "b", "c"])
        self.assertEqual(vocab.id("a"), 4)
        self.assertEqual(vocab.token(0), "<pad>")
        self.assertEqual(vocab.id("zzz"), UNK)
        self.assertEqual(len(vocab), 7)

    def test_order_independent(self):
        a = Vocabulary.build(["one two", "three"])
        b = Vocabulary.build(["three", "one two"])
        self.assertEqual(a.tokens(), b.tokens())

    def test_min_count(self):
        vocab = Vocabulary.build(["a b", "a c"], min_count=2)
        self.assertEqual(vocab.tokens(), ["a"])

    def test_text_form(self):
        vocab = Vocabulary.build(["violin solo"])
        self.assertEqual(vocab.dumps(), "solo\nviolin\n")
        self.assertEqual(Vocabulary.loads(vocab.dumps()).tokens(),
                         vocab.tokens())

    def test_invalid_text(self):
        with self.assertRaisesRegex(ParseError, "line 2"):
            Vocabulary.loads("a\n\nb\n")
        with self.assertRaises(ParseError):
            Vocabulary.loads("a\n<eos>\n")
        with self.assertRaises(ParseError):
            Vocabulary.loads("a\nb\na\n")


class BleuTest(TestCase):

    def test_fixtures(self):
        for hyp, ref, max_n, smoothing, expected in BLEU_CASES:
            with self.subTest(hyp=hyp, ref=ref, max_n=max_n):
                self.assertAlmostEqual(bleu(hyp, ref, max_n, smoothing),
                                       expected, delta=1e-9)

    def test_token_sequences(self):
        vocab = Vocabulary.build(["a calm piano melody"])
        seq = tokenize("a calm piano melody", vocab)
        self.assertEqual(bleu(seq, seq), 1.0)
        self.assertEqual(bleu(seq, "a calm piano melody"), 1.0)

    def test_short_hypothesis(self):
        # orders longer than the hypothesis count as precision 1
        self.assertEqual(bleu("a", "a", 4, True), 1.0)
        self.assertAlmostEqual(bleu("a", "a b", 3, True), math.exp(-1.0),
                               delta=1e-12)
        self.assertEqual(bleu("a", "a", 4, False), 0.0)

    def test_invalid_order(self):
        with self.assertRaises(InvalidInput):
            bleu("a", "a", max_n=0)

    def test_range(self):
        rng = np.random.default_rng(0)
        words = ["a", "b", "c", "d"]
        for _ in range(50):
            hyp = list(rng.choice(words, size=rng.integers(1, 8)))
            ref = list(rng.choice(words, size=rng.integers(1, 8)))
            score = bleu(hyp, ref, 2, True)
            self.assertGreaterEqual(score, 0.0)
            self.assertLessEqual(score, 1.0)

    def test_symmetric(self):
        self.assertAlmostEqual(symmetric_bleu("a b", "a b c d", 1),
                               0.5 * (math.exp(-1.0) + 0.5))


class CorpusBleuTest(TestCase):

    def test_identity(self):
        pairs = [("a calm melody", "a calm melody"),
                 ("the bright dance of violins", "the bright dance of "
                                                 "violins")]
        self.assertEqual(corpus_bleu(pairs), 100.0)

    def test_single_pair(self):
        pair = ("a b c d", "a b x d")
        self.assertAlmostEqual(corpus_bleu([pair], 2, False),
                               100.0 * bleu(*pair, 2, False))

    def test_pooled_counts(self):
        # unigrams 6/8, bigrams 4/6, equal lengths
        pairs = [("a b c d", "a b c d"), ("a b x y", "a b c d")]
        self.assertAlmostEqual(corpus_bleu(pairs, 2, False),
                               100.0 * math.sqrt(0.5), delta=1e-9)

    def test_empty(self):
        with self.assertRaises(InvalidInput):
            corpus_bleu([])


class PairwiseTest(TestCase):

    def test_identical_corpus(self):
        m = pairwise_bleu_matrix(["a b c d"] * 3)
        self.assertTrue(np.array_equal(m.data, np.ones((3, 3))))

    def test_asymmetric(self):
        m = pairwise_bleu_matrix(["a b", "a b c d", "x"], 1, False)
        self.assertTrue(np.array_equal(np.diag(m.data), np.ones(3)))
        self.assertAlmostEqual(m.data[0, 1], math.exp(-1.0))
        self.assertAlmostEqual(m.data[1, 0], 0.5)
        self.assertEqual(m.data[2, 0], 0.0)

    def test_table(self):
        texts = ["a b c", "a c b", "c"]
        table = BleuTable(texts, 2, True)
        self.assertEqual(len(table), 3)
        self.assertAlmostEqual(table.score(0, 1), bleu(texts[0], texts[1],
                                                        2, True))

    def test_too_few(self):
        with self.assertRaises(InvalidInput):
            pairwise_bleu_matrix(["a"])
