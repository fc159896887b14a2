import os

import numpy as np

from topoalign.config import RunConfig
from topoalign.data import PairedSample, TagSet, synth_generate
from topoalign.model import ModelBundle, ModelShape
from topoalign.textmetric import Vocabulary

SLOW = bool(os.environ.get("TA_SLOW_TESTS"))


def get_test_config(**changes) -> RunConfig:
    """Tiny configuration which trains in seconds."""
    values = {
        "seed": 0,
        "folds": 3,
        "trials": 1,
        "pretrain_epochs": 1,
        "joint_epochs": 1,
        "batch": 4,
        "k": 4,
        "segments": 2,
        "dim": 6,
        "bins": 8,
        "max_len": 6,
        "n": 12,
        "log_level": "WARNING",
    }
    values.update(changes)
    return RunConfig.from_dict(values)


def get_test_samples(n: int = 12, seed: int = 0, bins: int = 8):
    return synth_generate(n, seed, bins)


def get_test_bundle(texts=None, seed: int = 0, bins: int = 8,
                    segments: int = 2, dim: int = 6):
    texts = texts or ["a calm piano melody", "a bright violin dance",
                      "the cello sings softly"]
    vocab = Vocabulary.build(texts)
    shape = ModelShape(bins=bins, segments=segments, dim=dim,
                       vocab_size=len(vocab), max_positions=32,
                       head_hidden=5)
    return ModelBundle(shape, vocab, seed)


def make_sample(sample_id: str, text: str, bins: int = 8, frames: int = 6,
                seed: int = 0, tags: TagSet = None) -> PairedSample:
    rng = np.random.default_rng(seed)
    tags = tags or TagSet("major", "piano", "fast", "trio")
    return PairedSample(sample_id, rng.normal(size=(bins, frames)) + 1.0,
                        text, tags)
