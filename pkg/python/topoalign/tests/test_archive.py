import os
import tempfile
from unittest import TestCase

import numpy as np

from topoalign import RunArchive
from topoalign.archive import load_weights, save_weights
from topoalign.errors import InvalidInput, IoError

from . import get_test_bundle


def get_test_archive():
    bundle = get_test_bundle()
    return RunArchive({
        "config.json": {"seed": 0, "k": 4},
        "metrics.jsonl": [{"run_id": "t", "fold": 0, "seed": 0,
                           "phase": "eval", "epoch": 1, "bleu": 3.5}],
        "fold0/vocab.vocab": bundle.vocab,
        "fold0/s0/weights.tawt": bundle.params,
        "fold0/s0/generated.txt": "s0000\ta calm piano\n",
        "sweep.csv": [["value", "bleu_mean"], ["4", "3.5"]],
    }, run_id="train-ours-s0")


class RunArchiveTest(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_items(self):
        a = get_test_archive()
        self.assertEqual(a.run_id, "train-ours-s0")
        self.assertIn("summary.json", a.keys())
        self.assertEqual(a.keys(), sorted(a.keys()))
        self.assertEqual(a["config.json"]["k"], 4)
        with self.assertRaises(KeyError):
            a["missing.json"]
        del a["sweep.csv"]
        self.assertNotIn("sweep.csv", a)
        with self.assertRaises(InvalidInput):
            del a["summary.json"]

    def test_unknown_format(self):
        a = RunArchive()
        with self.assertRaises(InvalidInput):
            a["data/no_suffix"] = "text"
        with self.assertRaises(InvalidInput):
            a["data/values.xyz"] = object()
        a["data/values.xyz"] = "registered by python class"
        self.assertEqual(a["data/values.xyz"], "registered by python class")

    def test_write_read(self):
        a = get_test_archive()
        a.write(self.tmp.name)
        self.assertTrue(os.path.isfile(os.path.join(
            self.tmp.name, "fold0", "s0", "weights.tawt")))
        b = RunArchive.read(self.tmp.name)
        self.assertEqual(a.keys(), b.keys())
        self.assertEqual(a.hash(), b.hash())
        self.assertEqual(b["fold0/vocab.vocab"].tokens(),
                         a["fold0/vocab.vocab"].tokens())
        self.assertEqual(b["metrics.jsonl"], a["metrics.jsonl"])
        self.assertIn("weights.tawt", str(b))

    def test_hash_ignores_timestamp(self):
        a = get_test_archive()
        b = get_test_archive()
        b.summary["created"] = "2000-01-01T00:00:00+00:00"
        self.assertEqual(a.hash(), b.hash())
        b["metrics.jsonl"][0]["bleu"] = 3.6
        b["metrics.jsonl"] = b["metrics.jsonl"]
        self.assertNotEqual(a.hash(), b.hash())

    def test_read_missing(self):
        with self.assertRaises(IoError):
            RunArchive.read(os.path.join(self.tmp.name, "missing"))


class WeightsTest(TestCase):

    def test_save_load(self):
        bundle = get_test_bundle()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "weights.tawt")
            save_weights(bundle.params, path)
            params = load_weights(path)
        other = get_test_bundle(seed=5)
        other.load_params(params)
        m = np.random.default_rng(0).normal(size=(8, 6))
        self.assertEqual(other.generate(m, 4), bundle.generate(m, 4))

    def test_missing(self):
        with self.assertRaises(IoError):
            load_weights("./thisfiledoesntexist.tawt")
