import math
from unittest import TestCase

import numpy as np

from topoalign import losses
from topoalign import numcore as nc
from topoalign.errors import (InvalidConfig, InvalidInput, ShapeError,
                              ZeroNormError)
from topoalign.model import LatentRep, QueueEntry
from topoalign.numcore import Matrix, ParamStore, Tape
from topoalign.textmetric import BOS, EOS, TokenSequence

from . import SLOW


def _latent(values):
    return LatentRep(Matrix(values))


def _entry(i, values, text=""):
    return QueueEntry("q%d" % i, _latent(values), text)


def _unit(c):
    return [[c, math.sqrt(1.0 - c * c)]]


class ReconstructionTest(TestCase):

    def test_m2m(self):
        m = np.random.default_rng(0).normal(size=(3, 4))
        self.assertEqual(losses.loss_m2m(m, m).item(), 0.0)
        self.assertEqual(losses.loss_m2m([[1.0, 0.0]], [[0.0, 0.0]]).item(),
                         1.0)
        recon = np.random.default_rng(1).normal(size=(3, 4))
        self.assertAlmostEqual(losses.loss_m2m(m, recon).item(),
                               float(((m - recon) ** 2).sum()))
        with self.assertRaises(ShapeError):
            losses.loss_m2m(m, recon[:, :3])

    def test_t2t_uniform(self):
        vocab = 5
        seq = TokenSequence([BOS, 4, 4, EOS])
        value = losses.loss_t2t(seq, np.zeros((3, vocab))).item()
        self.assertAlmostEqual(value, math.log(vocab))

    def test_t2t_confident(self):
        seq = TokenSequence([BOS, 4, EOS])
        logits = np.full((2, 5), -50.0)
        logits[0, 4] = logits[1, EOS] = 50.0
        self.assertLess(losses.loss_t2t(seq, logits).item(), 1e-12)

    def test_t2t_hand_value(self):
        # log-softmax of [1, 2, 3] at class 0 and class 2
        seq = TokenSequence([BOS, 0, 2])
        logits = [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]
        lse = math.log(math.exp(1) + math.exp(2) + math.exp(3))
        # PAD (id 0) targets are masked, only class 2 counts
        self.assertAlmostEqual(losses.loss_t2t(seq, logits).item(), lse - 3)
        seq = TokenSequence([BOS, 1, 2])
        expected = ((lse - 2) + (lse - 3)) / 2
        self.assertAlmostEqual(losses.loss_t2t(seq, logits).item(), expected)

    def test_t2t_shape(self):
        with self.assertRaises(ShapeError):
            losses.loss_t2t(TokenSequence([BOS, 5, EOS]), np.zeros((3, 6)))

    def test_m2t_and_bwd(self):
        a = _latent([[0.0, 0.0]])
        b = _latent([[1.0, 0.0]])
        self.assertEqual(losses.loss_m2t(a, a).item(), 0.0)
        self.assertEqual(losses.loss_m2t(a, b).item(), 1.0)
        self.assertEqual(losses.loss_bwd_map(a, b).item(), 1.0)
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        self.assertAlmostEqual(losses.loss_m2t(_latent(x), _latent(y)).item(),
                               float(((x - y) ** 2).sum()))
        with self.assertRaises(ShapeError):
            losses.loss_m2t(a, _latent([[1.0, 0.0, 0.0]]))
        with self.assertRaises(ShapeError):
            losses.loss_bwd_map(a, _latent([[1.0], [0.0]]))


class TopologyLossTest(TestCase):

    def test_hand_value(self):
        value = losses.gtp_distance([[0.5, 0.5]], [0.2, 0.8]).item()
        self.assertAlmostEqual(value, 0.04243, delta=1e-4)

    def test_hand_value_through_queue(self):
        anchor = _latent([[1.0, 0.0]])
        group = [_entry(0, _unit(0.5)), _entry(1, _unit(0.5))]
        value = losses.loss_gtp(anchor, "", group,
                                text_sims=np.array([0.2, 0.8])).item()
        self.assertAlmostEqual(value, 0.04243, delta=1e-4)

    def test_matched_topologies(self):
        anchor = _latent([[1.0, 0.0]])
        group = [_entry(0, _unit(0.2)), _entry(1, _unit(0.8))]
        value = losses.loss_gtp(anchor, "", group,
                                text_sims=np.array([0.2, 0.8])).item()
        self.assertAlmostEqual(value, 0.0, delta=1e-12)

    def test_permutation(self):
        rng = np.random.default_rng(3)
        cos = rng.uniform(-1, 1, size=6)
        sims = rng.uniform(0, 1, size=6)
        perm = rng.permutation(6)
        a = losses.gtp_distance(cos.reshape(1, -1), sims).item()
        b = losses.gtp_distance(cos[perm].reshape(1, -1), sims[perm]).item()
        self.assertAlmostEqual(a, b, delta=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        cos = rng.uniform(-1, 1, size=5)
        sims = rng.uniform(0, 1, size=5)
        a = losses.gtp_distance(cos.reshape(1, -1), sims).item()
        b = losses.gtp_distance((cos + 0.37).reshape(1, -1), sims).item()
        self.assertAlmostEqual(a, b, delta=1e-12)

    def test_text_profile(self):
        anchor = _latent([[1.0, 0.0, 0.5]])
        group = [_entry(0, [[0.5, 1.0, 0.0]], "a calm piano"),
                 _entry(1, [[0.0, 1.0, 1.0]], "a loud drum")]
        direct = losses.loss_gtp(anchor, "a calm piano melody", group)
        sims = np.array([losses.bleu_profile("a calm piano melody",
                                             ["a calm piano", "a loud drum"])])
        given = losses.loss_gtp(anchor, "", group, text_sims=sims)
        self.assertAlmostEqual(direct.item(), given.item())

    def test_queue_has_no_gradient(self):
        params = ParamStore()
        params.add("z", [[0.4, -0.3, 1.0, 0.2]])
        params.add("q", [[1.0, 0.5, -0.5, 0.3]])
        group = [QueueEntry("q0", LatentRep(params["q"]), "a b c"),
                 _entry(1, [[0.1, 0.9, 0.0, 0.4]], "a c d")]
        with Tape() as tape:
            loss = losses.loss_gtp(LatentRep(params["z"]), "a b d", group)
        grads = nc.backward(loss, tape, params)
        self.assertTrue(np.any(grads["z"] != 0))
        self.assertTrue(np.array_equal(grads["q"], np.zeros((1, 4))))

    def test_errors(self):
        anchor = _latent([[1.0, 0.0]])
        with self.assertRaises(InvalidInput):
            losses.loss_gtp(anchor, "a", [])
        with self.assertRaises(ZeroNormError):
            losses.loss_gtp(_latent([[0.0, 0.0]]), "a",
                            [_entry(0, [[1.0, 0.0]], "a")])


class SentimentLossTest(TestCase):

    def test_values(self):
        s = np.eye(7)[0]
        self.assertEqual(losses.loss_sentiment(s, s).item(), 0.0)
        self.assertEqual(losses.loss_sentiment(s, np.eye(7)[3]).item(), 2.0)
        rng = np.random.default_rng(5)
        a, b = rng.dirichlet(np.ones(7)), rng.dirichlet(np.ones(7))
        self.assertAlmostEqual(losses.loss_sentiment(a, b).item(),
                               float(((a - b) ** 2).sum()))
        with self.assertRaises(ShapeError):
            losses.loss_sentiment(np.ones(6) / 6, np.ones(6) / 6)


class TotalTest(TestCase):

    def test_zero(self):
        self.assertEqual(losses.loss_total({}).total, 0.0)

    def test_defaults(self):
        parts = losses.loss_total({"m2m": 1.0, "t2t": 2.0, "m2t": 3.0,
                                   "gtp": 0.01, "sentiment": 0.2,
                                   "reg": 4.0})
        self.assertEqual((parts.alpha, parts.beta, parts.gamma),
                         (500.0, 5.0, 0.25))
        self.assertAlmostEqual(parts.total, 1 + 2 + 3 + 5 + 1 + 1,
                               delta=1e-10)

    def test_decomposition(self):
        rng = np.random.default_rng(6)
        values = dict(zip(losses.TERMS, rng.uniform(0, 2, size=6)))
        parts = losses.loss_total(values, 3.0, 2.0, 0.5)
        total = sum(getattr(parts, k) for k in ("m2m", "t2t", "m2t")) \
            + 3.0 * parts.gtp + 2.0 * parts.sentiment + 0.5 * parts.reg
        self.assertAlmostEqual(parts.total, total, delta=1e-10)
        restored = losses.LossBreakdown.from_dict(parts.to_dict())
        self.assertEqual(restored, parts)

    def test_matrix_parts(self):
        parts = losses.loss_total({"gtp": Matrix(0.002)})
        self.assertAlmostEqual(parts.total, 1.0)

    def test_invalid(self):
        with self.assertRaises(InvalidConfig):
            losses.loss_total({}, alpha=-1.0)
        with self.assertRaises(InvalidInput):
            losses.loss_total({"bogus": 1.0})
        with self.assertRaises(InvalidInput):
            losses.weighted_objective({"reg": Matrix(1.0)})

    def test_weighted_objective(self):
        value = losses.weighted_objective(
            {"m2m": Matrix(1.0), "gtp": Matrix(0.01),
             "sentiment": Matrix(0.1)}, alpha=500.0, beta=5.0)
        self.assertAlmostEqual(value.item(), 1.0 + 5.0 + 0.5)


class ComparisonLossTest(TestCase):

    def test_triplet(self):
        a = _latent([[0.0, 0.0]])
        self.assertEqual(losses.loss_triplet(a, a, _latent([[3.0, 1.0]]),
                                             0.0).item(), 0.0)
        p = _latent([[1.0, 0.0]])
        n = _latent([[0.0, 1.0]])
        self.assertAlmostEqual(losses.loss_triplet(a, p, n, 0.2).item(), 0.2)
        p = _latent([[1.0, 0.0]])
        n = _latent([[2.0, 0.0]])
        self.assertEqual(losses.loss_triplet(a, p, n, 1.0).item(), 0.0)
        with self.assertRaises(ShapeError):
            losses.loss_triplet(a, p, _latent([[1.0]]))

    def test_pairwise(self):
        a = _latent([[0.0, 0.0]])
        b = _latent([[1.0, 0.0]])
        self.assertEqual(losses.loss_pairwise(a, b, 0.05, 0.1).item(), 0.0)
        self.assertEqual(losses.loss_pairwise(a, a, 0.5, 0.1).item(), 0.0)
        self.assertEqual(losses.loss_pairwise(a, b, 0.5, 0.1).item(), 1.0)
        with self.assertRaises(ShapeError):
            losses.loss_pairwise(a, _latent([[1.0]]), 0.5)

    def test_contrastive(self):
        z = _latent([[1.0, 0.0]])
        value = losses.loss_contrastive(z, z, [_latent([[0.0, 1.0]])],
                                        temperature=1.0).item()
        self.assertAlmostEqual(value, 0.31326, delta=1e-5)
        for n in (1, 3, 7):
            value = losses.loss_contrastive(z, z, [z] * n, 0.5).item()
            self.assertAlmostEqual(value, math.log(n + 1), delta=1e-12)
        rng = np.random.default_rng(7)
        for _ in range(10):
            negs = [_latent(rng.normal(size=(1, 2))) for _ in range(3)]
            self.assertGreater(losses.loss_contrastive(z, z, negs).item(),
                               0.0)

    def test_contrastive_errors(self):
        z = _latent([[1.0, 0.0]])
        with self.assertRaises(InvalidInput):
            losses.loss_contrastive(z, z, [])
        with self.assertRaises(InvalidConfig):
            losses.loss_contrastive(z, z, [z], temperature=0.0)
        with self.assertRaises(ShapeError):
            losses.loss_contrastive(z, z, [_latent([[1.0, 0.0, 0.0]])])

    def test_augment(self):
        m = np.ones((4, 10))
        rng = np.random.default_rng(8)
        out = losses.augment(m, rng)
        self.assertEqual(out.shape, m.shape)
        masked = np.sum(np.all(np.abs(out) < 0.1, axis=0))
        self.assertEqual(masked, 1)
        a = losses.augment(m, np.random.default_rng(9))
        b = losses.augment(m, np.random.default_rng(9))
        self.assertTrue(np.array_equal(a, b))

    def test_mine_triplets(self):
        sims = np.array([[1.0, 0.8, 0.1, 0.3],
                         [0.8, 1.0, 0.2, 0.2],
                         [0.1, 0.2, 1.0, 0.9],
                         [0.3, 0.2, 0.9, 1.0]])
        triplets = losses.mine_triplets(sims)
        self.assertEqual(triplets[0], (0, 1, 2))
        self.assertEqual(triplets[1], (1, 0, 2))
        self.assertEqual(len(losses.mine_triplets(sims, limit=2)), 2)
        self.assertEqual(losses.mine_triplets(np.ones((2, 2))), [])


class GradientCheckTest(TestCase):

    def test_every_loss(self):
        seeds = 100 if SLOW else 10
        for name in losses.LOSS_NAMES:
            for seed in range(seeds):
                with self.subTest(loss=name, seed=seed):
                    loss_fn, params = losses.gradcheck_instance(name, seed)
                    report = nc.finite_diff_check(loss_fn, params)
                    self.assertTrue(report.passed, str(report))

    def test_sentiment_chain(self):
        # the sentiment instance differentiates through the whole model
        loss_fn, params = losses.gradcheck_instance("sentiment", 3)
        self.assertEqual(sorted(params.keys()),
                         ["f.conv%d.%s" % (i, p) for i in range(3)
                          for p in ("b", "w")])
        report = nc.finite_diff_check(loss_fn, params)
        self.assertTrue(report.passed, str(report))
        with Tape() as tape:
            loss = loss_fn()
        grads = nc.backward(loss, tape, params)
        self.assertGreater(max(float(np.abs(g).max())
                               for g in grads.values()), 0.0)

    def test_unknown(self):
        with self.assertRaises(InvalidInput):
            losses.gradcheck_instance("adversarial", 0)
