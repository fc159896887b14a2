from unittest import TestCase

import numpy as np

from topoalign.errors import ParseError
from topoalign.filebase import (CsvFile, JsonFile, JsonLinesFile, TextFile,
                                VocabFile, WeightsFile)
from topoalign.numcore import ParamStore
from topoalign.textmetric import Vocabulary


class JsonFileTest(TestCase):

    def test_hash_ignores_key_order(self):
        a = JsonFile({"b": 1, "a": [1, {"y": 2, "x": 3}]})
        b = JsonFile({"a": [1, {"x": 3, "y": 2}], "b": 1})
        self.assertEqual(a.hash(), b.hash())
        self.assertNotEqual(a.hash(), JsonFile({"a": 1}).hash())

    def test_decode(self):
        data = {"run_id": "x", "bleu": 12.5}
        self.assertEqual(JsonFile(JsonFile(data).encode()).data, data)
        with self.assertRaises(ParseError):
            JsonFile(b"{broken")


class JsonLinesFileTest(TestCase):

    def test_records(self):
        records = [{"epoch": 1, "phase": "joint"}, {"epoch": 2}]
        encoded = JsonLinesFile(records).encode()
        self.assertEqual(encoded.count(b"\n"), 2)
        self.assertEqual(JsonLinesFile(encoded).data, records)

    def test_bad_line(self):
        with self.assertRaises(ParseError) as cm:
            JsonLinesFile(b'{"a": 1}\n\n{oops}\n')
        self.assertEqual(cm.exception.line, 3)


class TextAndTableTest(TestCase):

    def test_text(self):
        text = "Allegro con brio, a bright théme\n"
        self.assertEqual(TextFile(TextFile(text).encode()).data, text)

    def test_csv(self):
        rows = [["value", "bleu_mean"], ["4", "1.25"]]
        encoded = CsvFile(rows).encode()
        self.assertEqual(encoded, b"value,bleu_mean\n4,1.25\n")
        self.assertEqual(CsvFile(encoded).data, rows)

    def test_vocab(self):
        vocab = Vocabulary.build(["a calm piano"])
        encoded = VocabFile(vocab).encode()
        self.assertEqual(encoded, b"a\ncalm\npiano\n")
        self.assertEqual(VocabFile(encoded).data.tokens(), vocab.tokens())


class WeightsFileTest(TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.params = ParamStore()
        self.params.add("f.conv0.w", rng.normal(size=(6, 4)))
        self.params.add("h.b2", rng.normal(size=(1, 7)))

    def test_exact(self):
        encoded = WeightsFile(self.params).encode()
        self.assertEqual(encoded[:4], b"TAWT")
        loaded = WeightsFile(encoded).data
        self.assertEqual(loaded.keys(), self.params.keys())
        for name, p in self.params.items():
            self.assertTrue(np.array_equal(loaded[name].data, p.data))

    def test_hash(self):
        a = WeightsFile(self.params).hash()
        self.params["h.b2"].data[0, 0] += 1e-12
        self.assertNotEqual(a, WeightsFile(self.params).hash())

    def test_corrupt(self):
        encoded = WeightsFile(self.params).encode()
        with self.assertRaisesRegex(ParseError, "Truncated"):
            WeightsFile(encoded[:-3])
        with self.assertRaisesRegex(ParseError, "Trailing"):
            WeightsFile(encoded + b"\x00")
        with self.assertRaisesRegex(ParseError, "format"):
            WeightsFile(b"NOPE" + encoded[4:])
        bumped = encoded[:5] + b"2" + encoded[6:]
        with self.assertRaisesRegex(ParseError, "version"):
            WeightsFile(bumped)
