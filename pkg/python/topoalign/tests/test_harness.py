import json
import math
import os
import tempfile
from unittest import TestCase, skipUnless

import numpy as np
from jsonschema.exceptions import ValidationError

from topoalign import harness
from topoalign import numcore as nc
from topoalign.archive import RunArchive
from topoalign.config import RunConfig
from topoalign.data import FoldSplit, kfold_split, load_dataset, save_dataset
from topoalign.errors import (InvalidConfig, InvalidInput, IoError,
                              NumericError)
from topoalign.harness import (FoldTrainer, MetricsLog, MetricsRecord,
                               aggregate, cmd_baseline, cmd_gradcheck,
                               cmd_plot, cmd_synth, cmd_sweep, cmd_train,
                               compare_runs, fold_means, load_samples,
                               make_run_id, read_metrics, sign_test,
                               train_fold)
from topoalign.losses import LOSS_NAMES, loss_t2t
from topoalign.model import SOURCE_TO_TEXT, TEXT_TO_SOURCE, ModelBundle
from topoalign.textmetric import Vocabulary, tokenize

from . import SLOW, get_test_config, get_test_samples


def _record(epoch, phase="joint", fold=0, **kwargs):
    return MetricsRecord("run", fold, 0, phase, epoch, **kwargs)


class MetricsLogTest(TestCase):

    def test_monotonic(self):
        log = MetricsLog()
        log.append(_record(1))
        log.append(_record(2))
        log.append(_record(1, phase="eval"))
        log.append(_record(1, fold=1))
        self.assertEqual(len(log), 4)
        with self.assertRaisesRegex(InvalidInput, "precedes epoch 2"):
            log.append(_record(1))
        self.assertEqual(len(log.select(phase="joint")), 3)
        self.assertEqual(len(log.select(phase="joint", fold=0)), 2)

    def test_schema(self):
        log = MetricsLog()
        with self.assertRaises(ValidationError):
            log.append(_record(0, phase="warmup"))
        self.assertEqual(len(log), 0)

    def test_to_list(self):
        log = MetricsLog()
        log.append(_record(0, phase="eval", bleu=3.5))
        self.assertEqual(log.to_list(), [{"run_id": "run", "fold": 0,
                                          "seed": 0, "phase": "eval",
                                          "epoch": 0, "variant": "",
                                          "bleu": 3.5}])
        restored = MetricsRecord.from_dict(log.to_list()[0])
        self.assertEqual(restored, log.records[0])

    def test_read_metrics(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "metrics.jsonl")
            with self.assertRaises(IoError):
                read_metrics(path)
            with open(path, "w") as fp:
                fp.write(json.dumps(_record(2).to_dict()) + "\n")
            self.assertEqual(read_metrics(path)[0]["epoch"], 2)


class StatisticsTest(TestCase):

    def test_aggregate(self):
        agg = aggregate([{"fold": 0, "bleu": 1.0}, {"fold": 0, "bleu": 3.0},
                         {"fold": 1, "bleu": 5.0}])
        self.assertEqual(agg.per_fold[0], (2.0, 1.0, 2))
        self.assertEqual(agg.per_fold[1], (5.0, 0.0, 1))
        self.assertAlmostEqual(agg.mean, 3.0)
        self.assertAlmostEqual(agg.std, math.sqrt(8.0 / 3.0))
        self.assertEqual(agg.count, 3)
        self.assertEqual(agg.to_dict()["per_fold"][1]["trials"], 1)
        with self.assertRaises(InvalidInput):
            aggregate([])

    def test_sign_test(self):
        result = sign_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        self.assertEqual((result.wins, result.losses, result.ties),
                         (3, 0, 0))
        self.assertAlmostEqual(result.p_value, 0.25)
        result = sign_test([1.0, 2.0, 0.0, 4.0], [0.0, 2.0, 1.0, 3.0])
        self.assertEqual((result.wins, result.losses, result.ties),
                         (2, 1, 1))
        self.assertAlmostEqual(result.p_value, 1.0)
        self.assertEqual(sign_test([1.0], [1.0]).p_value, 1.0)
        with self.assertRaises(InvalidInput):
            sign_test([1.0], [1.0, 2.0])

    def test_compare_runs(self):
        a = [{"phase": "eval", "fold": f, "bleu": 10.0 + f,
              "variant": "ours"} for f in range(5)]
        b = [{"phase": "baseline", "fold": f, "bleu": 1.0,
              "variant": "tags_knn"} for f in range(5)]
        b += [{"phase": "joint", "fold": 0, "bleu": None}]
        self.assertEqual(fold_means(a), {f: 10.0 + f for f in range(5)})
        result = compare_runs(a, b, "ours", "tags_knn")
        self.assertEqual(result.wins, 5)
        self.assertAlmostEqual(result.p_value, 2.0 / 32.0)
        with self.assertRaises(InvalidInput):
            compare_runs(a, b, "ours", "tags_representative")


class TrainTest(TestCase):

    def setUp(self):
        self.config = get_test_config()
        self.samples = get_test_samples()

    def test_run_id(self):
        self.assertEqual(make_run_id("train", RunConfig(seed=3)),
                         "train-ours-s3")
        self.assertEqual(make_run_id("baseline", RunConfig(), "tags"),
                         "baseline-tags-s0")

    def test_fold_trainer(self):
        split = kfold_split([s.id for s in self.samples], 3)[0]
        log = MetricsLog()
        result = train_fold(self.config, self.samples, split, 0, log, "t")
        self.assertEqual(result.fold, 0)
        self.assertEqual(len(result.generated), len(split.test_ids))
        self.assertGreaterEqual(result.bleu, 0.0)
        self.assertLessEqual(result.bleu, 100.0)
        self.assertEqual(len(result.pairs), 4 * 3 // 2)
        phases = [r.phase for r in log.records]
        self.assertEqual(phases, ["pretrain", "joint", "eval"])
        # the vocabulary is built from the train split only
        train = Vocabulary.build(s.text for s in self.samples
                                 if s.id in split.train_ids)
        self.assertEqual(result.vocab.tokens(), train.tokens())

    def test_split_errors(self):
        with self.assertRaises(InvalidInput):
            train_fold(self.config, self.samples,
                       FoldSplit(0, ["s0000"], ["s0000"]), 0)
        with self.assertRaises(InvalidInput):
            train_fold(self.config, self.samples,
                       FoldSplit(0, ["s0000"], ["x"]), 0)
        with self.assertRaises(InvalidInput):
            FoldTrainer(self.config, [], 0)

    def test_generation_loss(self):
        config = self.config.replace(variant="coordinate")
        s = self.samples[0]
        t2t = {}
        for enabled in (True, False):
            trainer = FoldTrainer(config.replace(generation_loss=enabled),
                                  self.samples, 0)
            seq = trainer.seqs[s.id]
            with nc.no_tape():
                z_m = trainer.bundle.encode_source(s.features)
                t2t[enabled] = trainer._sample_terms(s, seq, z_m)["t2t"].item()
                extra = loss_t2t(seq, trainer.bundle.generation_logits(
                    z_m, seq)).item()
        self.assertGreater(extra, 0.0)
        self.assertAlmostEqual(t2t[True], t2t[False] + extra, delta=1e-9)

    def test_deterministic(self):
        a = cmd_train(self.config, self.samples, write=False)
        b = cmd_train(self.config, self.samples, write=False)
        self.assertEqual(len(a.results), 3)
        self.assertEqual(a.aggregate.mean, b.aggregate.mean)
        for ra, rb in zip(a.results, b.results):
            self.assertEqual(ra.params.max_abs_diff(rb.params), 0.0)
            self.assertEqual(ra.generated, rb.generated)
        self.assertEqual(a.log.to_list(), b.log.to_list())

    def test_variants(self):
        for variant in ("coordinate", "+contrastive", "+triplet",
                        "+pairwise", "encoder_decoder"):
            with self.subTest(variant=variant):
                config = self.config.replace(variant=variant, folds=2)
                report = cmd_train(config, self.samples, write=False)
                self.assertEqual(report.run_id, "train-%s-s0" % variant)
                self.assertEqual(report.aggregate.count, 2)

    def test_write(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = self.config.replace(out_dir=tmp, folds=2)
            report = cmd_train(config, self.samples)
            self.assertEqual(report.directory,
                             os.path.join(tmp, "train-ours-s0"))
            archive = RunArchive.read(report.directory)
            self.assertEqual(archive.run_id, "train-ours-s0")
            self.assertEqual(archive["config.json"]["k"], 4)
            self.assertIn("fold1/vocab.vocab", archive)
            self.assertIn("fold0/s0/weights.tawt", archive)
            records = read_metrics(os.path.join(report.directory,
                                                "metrics.jsonl"))
            self.assertEqual(len(records), len(report.log))
            self.assertEqual(archive.summary["bleu"]["count"], 2)

    def test_archive_hash(self):
        hashes = []
        for name in ("a", "b"):
            with tempfile.TemporaryDirectory() as tmp:
                config = self.config.replace(out_dir=tmp, folds=2)
                report = cmd_train(config, self.samples)
                hashes.append(RunArchive.read(report.directory).hash())
        self.assertEqual(hashes[0], hashes[1])

    def test_load_samples(self):
        config = RunConfig(n=10, bins=6, seed=1)
        self.assertEqual(len(load_samples(config)), 10)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "corpus.jsonl")
            save_dataset(get_test_samples(bins=4), path)
            with self.assertRaises(InvalidConfig):
                load_samples(RunConfig(dataset=path, bins=8))
            self.assertEqual(len(load_samples(RunConfig(dataset=path,
                                                        bins=4))), 12)


class BaselineTest(TestCase):

    def test_baseline(self):
        report = cmd_baseline(get_test_config(), get_test_samples(),
                              write=False)
        self.assertEqual(sorted(report.scores),
                         ["tags_knn", "tags_representative"])
        self.assertEqual(len(report.log), 6)
        for agg in report.scores.values():
            self.assertEqual(agg.count, 3)
            self.assertTrue(0.0 <= agg.mean <= 100.0)


class SweepTest(TestCase):

    def test_errors(self):
        config = get_test_config()
        with self.assertRaises(InvalidConfig):
            cmd_sweep(config, "beta", [1.0])
        with self.assertRaises(InvalidInput):
            cmd_sweep(config, "k", [])
        with self.assertRaises(InvalidConfig):
            cmd_sweep(config, "k", [4, 1])

    def test_sweep(self):
        config = get_test_config(folds=2, joint_epochs=0)
        with tempfile.TemporaryDirectory() as tmp:
            config = config.replace(out_dir=tmp)
            report = cmd_sweep(config, "k", [2, 4, 4], get_test_samples())
            self.assertEqual(report.values, [2, 4])
            rows = report.rows()
            self.assertEqual(rows[0], ["k", "bleu_mean", "bleu_std"])
            self.assertEqual([r[0] for r in rows[1:]], ["2", "4"])
            records = read_metrics(os.path.join(report.directory,
                                                "metrics.jsonl"))
            self.assertEqual([r["extra"]["value"] for r in records], [2, 4])
            self.assertTrue(os.path.isfile(os.path.join(
                report.directory, "k_4", "metrics.jsonl")))


class GradcheckTest(TestCase):

    def test_passes(self):
        summary = cmd_gradcheck(instances=2)
        self.assertTrue(summary.passed, str(summary))
        self.assertEqual([c.name for c in summary.checks], list(LOSS_NAMES))
        self.assertIn("passed", str(summary))

    def test_corrupted(self):
        def corrupt(name, grads):
            if name == LOSS_NAMES[0]:
                for g in grads.values():
                    g += 1.0

        summary = cmd_gradcheck(instances=1, hook=corrupt)
        self.assertFalse(summary.passed)
        self.assertEqual(summary.failed(), [LOSS_NAMES[0]])
        self.assertIn("FAILED", str(summary))

    def test_no_instances(self):
        with self.assertRaises(InvalidInput):
            cmd_gradcheck(instances=0)


class CommandTest(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_synth(self):
        out = os.path.join(self.tmp.name, "synthetic.jsonl")
        stats = cmd_synth(12, 0, out, bins=8, segments=2, cosine_min=0.0,
                          below_min=0.0)
        self.assertEqual(len(load_dataset(out)), 12)
        self.assertEqual(stats.pairs, 12 * 11)

    def test_synth_rejects_corpus(self):
        out = os.path.join(self.tmp.name, "rejected.jsonl")
        with self.assertRaisesRegex(NumericError, "statistics check"):
            cmd_synth(12, 0, out, bins=8, segments=2, cosine_min=1.01)
        self.assertFalse(os.path.exists(out))

    def test_plot(self):
        metrics = os.path.join(self.tmp.name, "metrics.jsonl")
        with open(metrics, "w") as fp:
            fp.write(json.dumps(_record(1, phase="eval",
                                        pairs=[[0.2, 0.5]]).to_dict()))
            fp.write("\n")
        out = os.path.join(self.tmp.name, "scatter.svg")
        svg = cmd_plot(metrics, "similarity_scatter", out)
        with open(out, encoding="utf-8") as fp:
            self.assertEqual(fp.read(), svg)
        with self.assertRaises(InvalidConfig):
            cmd_plot(metrics, "pie", out)
        with self.assertRaises(IoError):
            cmd_plot(metrics, "similarity_scatter",
                     os.path.join(self.tmp.name, "no", "such.svg"))

    def test_module_constants(self):
        self.assertEqual(harness.SWEEP_PARAMS, ("k", "alpha"))
        self.assertIsNone(harness.VARIANT_TERMS["encoder_decoder"])


@skipUnless(SLOW, "set TA_SLOW_TESTS to run the full schedule")
class DefaultScheduleTest(TestCase):

    def test_first_fold(self):
        config = RunConfig()
        samples = load_samples(config)
        split = kfold_split([s.id for s in samples], config.folds,
                            config.seed)[0]
        log = MetricsLog()
        result = train_fold(config, samples, split, config.seed, log)
        self.assertTrue(0.0 <= result.bleu <= 100.0)
        self.assertTrue(-1.0 <= result.pearson <= 1.0)
        self.assertIsNotNone(result.spread_before)
        self.assertIsNotNone(result.spread_after)
        self.assertEqual(len(log.select(phase="joint")), config.joint_epochs)


@skipUnless(SLOW, "set TA_SLOW_TESTS to run the full schedule")
class DirectionalTest(TestCase):

    @classmethod
    def setUpClass(cls):
        cls.config = RunConfig()
        cls.samples = load_samples(cls.config)
        cls.split = kfold_split([s.id for s in cls.samples],
                                cls.config.folds, cls.config.seed)[0]
        cls.result = train_fold(cls.config, cls.samples, cls.split,
                                cls.config.seed)

    def test_spread_growth(self):
        before = self.result.spread_before.std
        after = self.result.spread_after.std
        self.assertGreaterEqual(after, 3.0 * before)
        pairwise = train_fold(RunConfig(variant="+pairwise"), self.samples,
                              self.split, self.config.seed)
        self.assertGreater(after, pairwise.spread_after.std)

    def test_autoencoder_bleu(self):
        self.assertGreaterEqual(self.result.pretrain_bleu, 60.0)

    def test_mapping_round_trip(self):
        bundle = ModelBundle.from_config(self.config, self.result.vocab)
        bundle.load_params(self.result.params)
        train = set(self.split.train_ids)
        error = norm = 0.0
        with nc.no_tape():
            for s in self.samples:
                if s.id not in train:
                    continue
                x = bundle.encode_text(tokenize(s.text, self.result.vocab))
                back = bundle.map_latent(
                    bundle.map_latent(x, TEXT_TO_SOURCE), SOURCE_TO_TEXT)
                error += float(np.sum((back.vector() - x.vector()) ** 2))
                norm += float(np.sum(x.vector() ** 2))
        self.assertLess(error, 0.1 * norm)

    def test_variant_ordering(self):
        ours = cmd_train(self.config, self.samples, write=False)
        coordinate = cmd_train(RunConfig(variant="coordinate"),
                               self.samples, write=False)
        baselines = cmd_baseline(self.config, self.samples, write=False)
        self.assertGreater(ours.aggregate.mean, coordinate.aggregate.mean)
        for name, score in baselines.scores.items():
            self.assertGreater(coordinate.aggregate.mean, score.mean, name)
        folds = sorted(ours.aggregate.per_fold)
        test = sign_test([ours.aggregate.per_fold[f][0] for f in folds],
                         [coordinate.aggregate.per_fold[f][0]
                          for f in folds])
        self.assertGreater(test.wins, test.losses)
