##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the translation model: the source encoder f
# (1-D convolution stack), the source decoder f' (transposed
# convolutions), the text encoder g (embedding and convolutional mixing),
# the autoregressive text decoder g' (two stacked Elman layers), the
# mapping auto-encoder halves M_fwd and M_bwd, the sentiment head h and
# the momentum reference queue.
#
# Parameter names are prefixed by their component:
#
# f.   source encoder        fd.  source decoder
# g.   text encoder          gd.  text decoder
# mf.  M_fwd (text->source)  mb.  M_bwd (source->text)
# h.   sentiment head
#
##########################################################################

import collections
import typing
from dataclasses import dataclass

import numpy as np
from loguru import logger

from . import numcore as nc
from .errors import InvalidConfig, InvalidInput, ShapeError
from .numcore import Matrix, ParamStore
from .textmetric import BOS, EOS, PAD, TokenSequence, Vocabulary, from_ids
from .textmetric import tokenize

SENTIMENT_CLASSES = (
    "anger",
    "disgust",
    "fear",
    "joy",
    "neutral",
    "sadness",
    "surprise",
)

TEXT_TO_SOURCE = "text_to_source"
SOURCE_TO_TEXT = "source_to_text"


##########################################################################
# Latent representation and segment pooling


@dataclass
class LatentRep:
    """Fixed-size S x d representation emitted by both encoders."""

    values: Matrix

    @property
    def segments(self) -> int:
        return self.values.rows

    @property
    def dim(self) -> int:
        return self.values.cols

    def flatten(self) -> Matrix:
        """Canonical 1 x (S*d) vector form used for similarities."""
        return self.values.flatten()

    def vector(self) -> np.ndarray:
        return self.values.data.reshape(-1).copy()

    def detach(self) -> "LatentRep":
        return LatentRep(nc.detach(self.values))


def segment_bounds(frames: int, segments: int) -> typing.List[tuple]:
    """Frame ranges [floor(b*T/S), floor((b+1)*T/S)) of all segments."""
    if frames < segments:
        raise InvalidInput("Cannot split %d frames into %d segments!"
                           % (frames, segments))
    return [(b * frames // segments, (b + 1) * frames // segments)
            for b in range(segments)]


def _pool_matrix(frames: int, segments: int) -> np.ndarray:
    pool = np.zeros((segments, frames))
    for b, (start, stop) in enumerate(segment_bounds(frames, segments)):
        pool[b, start:stop] = 1.0 / (stop - start)
    return pool


def segment_pool(seq, segments: int) -> Matrix:
    """Mean-pool the rows of a T x d sequence into S even segments."""
    seq = nc.as_matrix(seq)
    return nc.matmul(_pool_matrix(seq.rows, segments), seq)


def segment_unpool(latent, frames: int) -> Matrix:
    """Repeat every segment row over the frames of its segment."""
    latent = nc.as_matrix(latent)
    assign = (_pool_matrix(frames, latent.rows) > 0).astype(float).T
    return nc.matmul(assign, latent)


##########################################################################
# Model bundle


@dataclass(frozen=True)
class ModelShape:
    bins: int = 32
    segments: int = 4
    dim: int = 64
    kernel: int = 3
    vocab_size: int = 4
    max_positions: int = 256
    head_hidden: int = 32

    @classmethod
    def from_config(cls, config, vocab_size: int) -> "ModelShape":
        return cls(bins=config.bins, segments=config.segments,
                   dim=config.dim, kernel=config.kernel,
                   vocab_size=vocab_size)


class ModelBundle:
    """All networks of the translation model and their parameters."""

    def __init__(self, shape: ModelShape, vocab: Vocabulary, seed: int = 0,
                 direct_generation: bool = False):
        if shape.vocab_size != len(vocab):
            raise ShapeError("Model vocabulary size %d differs from %d!"
                             % (shape.vocab_size, len(vocab)))
        self.shape = shape
        self.vocab = vocab
        self.direct_generation = direct_generation
        self.params = ParamStore()
        self._init_params(np.random.default_rng(seed))

    @classmethod
    def from_config(cls, config, vocab: Vocabulary,
                    seed: int = 0) -> "ModelBundle":
        """Build a freshly initialized bundle for a RunConfig."""
        return cls(ModelShape.from_config(config, len(vocab)), vocab, seed,
                   config.direct_generation)

    def load_params(self, params: ParamStore):
        """Copy loaded weights into the bundle. Names and shapes must match
        exactly."""
        missing = set(self.params.keys()) ^ set(params.keys())
        if missing:
            raise ShapeError("Weights do not match the model: %s!"
                             % ", ".join(sorted(missing)[:5]))
        for name, p in self.params.items():
            if p.shape != params[name].shape:
                raise ShapeError("Parameter %s has shape %s, expected %s!"
                                 % (name, params[name].shape, p.shape))
            p.data[...] = params[name].data

    def _init_params(self, rng: np.random.Generator):
        s = self.shape
        F, S, d, K, V = s.bins, s.segments, s.dim, s.kernel, s.vocab_size
        p = self.params

        def dense(name, rows, cols, fan_in=None):
            fan_in = fan_in or rows
            p.add(name, rng.normal(0.0, 1.0 / np.sqrt(fan_in), (rows, cols)))

        def zeros(name, cols):
            p.add(name, np.zeros((1, cols)))

        for i, (c_in, c_out) in enumerate(((F, d), (d, d), (d, d))):
            dense("f.conv%d.w" % i, K * c_in, c_out)
            zeros("f.conv%d.b" % i, c_out)
        for i, (c_in, c_out) in enumerate(((d, d), (d, d), (d, F))):
            dense("fd.deconv%d.w" % i, c_in, K * c_out, fan_in=K * c_in)
            zeros("fd.deconv%d.b" % i, c_out)

        dense("g.emb", V, d, fan_in=1)
        dense("g.pos", s.max_positions, d, fan_in=4 * d)
        for i in range(2):
            dense("g.conv%d.w" % i, K * d, d)
            zeros("g.conv%d.b" % i, d)

        dense("gd.emb", V, d, fan_in=1)
        dense("gd.init", S * d, d)
        zeros("gd.init.b", d)
        dense("gd.ctx", S * d, d)
        dense("gd.x1", d, d)
        dense("gd.h1", d, d)
        zeros("gd.b1", d)
        dense("gd.x2", d, d)
        dense("gd.h2", d, d)
        zeros("gd.b2", d)
        dense("gd.out", d, V)
        zeros("gd.out.b", V)

        for prefix in ("mf", "mb"):
            p.add(prefix + ".w", np.eye(d) + rng.normal(0.0, 1e-3, (d, d)))
            zeros(prefix + ".b", d)

        dense("h.w1", V, s.head_hidden, fan_in=1)
        zeros("h.b1", s.head_hidden)
        dense("h.w2", s.head_hidden, len(SENTIMENT_CLASSES))
        zeros("h.b2", len(SENTIMENT_CLASSES))

    def _p(self, params: ParamStore, name: str) -> Matrix:
        return (params or self.params)[name]

    # Source side

    def encode_source(self, m, params: ParamStore = None) -> LatentRep:
        """f: F x T feature matrix -> S x d latent.

        Args:
            m: Feature matrix with one row per frequency bin.
            params: Parameter store to read f from (e.g. the momentum
                    copy). Defaults to the live parameters.
        """
        m = nc.as_matrix(m)
        s = self.shape
        if m.rows != s.bins:
            raise ShapeError("Feature matrix has %d bins, expected %d!"
                             % (m.rows, s.bins))
        if m.cols < s.segments:
            raise InvalidInput("Feature matrix has %d frames, needs at "
                               "least %d!" % (m.cols, s.segments))
        pad = s.kernel // 2
        h = nc.transpose(m)
        for i in range(3):
            h = nc.conv1d(h, self._p(params, "f.conv%d.w" % i),
                          self._p(params, "f.conv%d.b" % i),
                          kernel=s.kernel, stride=1, padding=pad)
            if i < 2:
                h = nc.tanh(h)
        return LatentRep(segment_pool(h, s.segments))

    def decode_source(self, latent: LatentRep, frames: int) -> Matrix:
        """f': S x d latent -> F x T reconstruction."""
        s = self.shape
        pad = s.kernel // 2
        h = segment_unpool(latent.values, frames)
        for i in range(3):
            h = nc.conv_transpose1d(h, self.params["fd.deconv%d.w" % i],
                                    self.params["fd.deconv%d.b" % i],
                                    kernel=s.kernel, stride=1, padding=pad)
            if i < 2:
                h = nc.tanh(h)
        return nc.transpose(h)

    # Text side

    def encode_text(self, seq: TokenSequence) -> LatentRep:
        """g: token sequence -> S x d latent.

        Sequences shorter than S are padded with PAD tokens, so every
        segment covers at least one position.
        """
        s = self.shape
        ids = np.asarray(seq.tokens, dtype=np.int64)
        if not len(ids):
            raise InvalidInput("Cannot encode an empty token sequence!")
        if len(ids) < s.segments:
            ids = np.concatenate([ids, np.full(s.segments - len(ids), PAD)])
        positions = np.minimum(np.arange(len(ids)), s.max_positions - 1)
        h = nc.add(nc.take_rows(self.params["g.emb"], ids),
                   nc.take_rows(self.params["g.pos"], positions))
        for i in range(2):
            h = nc.tanh(nc.conv1d(h, self.params["g.conv%d.w" % i],
                                  self.params["g.conv%d.b" % i],
                                  kernel=s.kernel, stride=1,
                                  padding=s.kernel // 2))
        return LatentRep(segment_pool(h, s.segments))

    def _decoder_logits(self, latent: LatentRep, inputs) -> Matrix:
        p = self.params
        c = latent.flatten()
        h0 = nc.tanh(nc.add(nc.matmul(c, p["gd.init"]), p["gd.init.b"]))
        ctx = nc.matmul(c, p["gd.ctx"])
        x1 = nc.matmul(nc.take_rows(p["gd.emb"], inputs), p["gd.x1"])
        x1 = nc.add(nc.add(x1, ctx), p["gd.b1"])
        h1 = nc.rnn_tanh(x1, h0, p["gd.h1"])
        x2 = nc.add(nc.matmul(h1, p["gd.x2"]), p["gd.b2"])
        h2 = nc.rnn_tanh(x2, np.zeros((1, self.shape.dim)), p["gd.h2"])
        return nc.add(nc.matmul(h2, p["gd.out"]), p["gd.out.b"])

    def decode_text(self, latent: LatentRep, targets: TokenSequence = None,
                    max_len: int = None):
        """g': latent -> text.

        Teacher-forced mode (targets given) returns the (|targets|-1) x V
        logits predicting every next token of targets. Greedy mode
        (max_len given) returns the generated TokenSequence; generation
        stops at EOS or after max_len tokens, ties go to the lowest id.
        """
        if latent.dim != self.shape.dim or \
                latent.segments != self.shape.segments:
            raise ShapeError("Latent of shape %s does not fit the decoder!"
                             % (latent.values.shape,))
        if targets is not None:
            if len(targets.tokens) < 2:
                raise InvalidInput("Teacher forcing needs BOS and EOS!")
            return self._decoder_logits(latent, targets.tokens[:-1])
        if max_len is None or max_len < 1:
            raise InvalidInput("Greedy decoding needs max_len >= 1!")
        ids = [BOS]
        with nc.no_tape():
            for _ in range(max_len):
                row = self._decoder_logits(latent, ids).data[-1].copy()
                row[PAD] = row[BOS] = -np.inf
                token = int(np.argmax(row))
                if token == EOS:
                    break
                ids.append(token)
        return from_ids(ids, self.vocab)

    # Mapping auto-encoder

    def map_latent(self, latent: LatentRep, direction: str) -> LatentRep:
        """Apply M_fwd (text_to_source) or M_bwd (source_to_text)."""
        if direction == TEXT_TO_SOURCE:
            prefix = "mf"
        elif direction == SOURCE_TO_TEXT:
            prefix = "mb"
        else:
            raise InvalidInput("Unknown mapping direction '%s'!" % direction)
        if latent.dim != self.shape.dim:
            raise ShapeError("Latent dimension %d differs from %d!"
                             % (latent.dim, self.shape.dim))
        out = nc.add(nc.matmul(latent.values, self.params[prefix + ".w"]),
                     self.params[prefix + ".b"])
        return LatentRep(out)

    # Sentiment

    def sentiment_head(self, soft_tokens) -> Matrix:
        """h: mean soft token distribution (1 x V) -> 7-class distribution."""
        p = self.params
        hidden = nc.tanh(nc.add(nc.matmul(soft_tokens, p["h.w1"]), p["h.b1"]))
        return nc.softmax(nc.add(nc.matmul(hidden, p["h.w2"]), p["h.b2"]))

    def generation_latent(self, source: LatentRep) -> LatentRep:
        """Text-space latent fed to g' for a source latent."""
        if self.direct_generation:
            return source
        return self.map_latent(source, SOURCE_TO_TEXT)

    def generation_logits(self, source: LatentRep,
                          targets: TokenSequence) -> Matrix:
        """Teacher-forced logits of g' on the generation path."""
        return self.decode_text(self.generation_latent(source), targets)

    def predict_sentiment(self, source: LatentRep, targets: TokenSequence,
                          logits: Matrix = None) -> Matrix:
        """h(g'(M_bwd(f(m)))) on the teacher-forced soft token
        distribution of the reference text.

        Args:
            source: Source latent f(m).
            targets: Reference text used for teacher forcing.
            logits: Precomputed generation_logits(source, targets).
        """
        if logits is None:
            logits = self.generation_logits(source, targets)
        soft = nc.scale(nc.sum_rows(nc.softmax(logits)), 1.0 / logits.rows)
        return self.sentiment_head(soft)

    def generate(self, m, max_len: int) -> TokenSequence:
        """Translate a feature matrix into text."""
        with nc.no_tape():
            latent = self.generation_latent(self.encode_source(m))
        return self.decode_text(latent, max_len=max_len)


def generate(bundle: ModelBundle, m, max_len: int) -> TokenSequence:
    """Greedy translation g'(M_bwd(f(m))), or g'(f(m)) if the bundle uses
    direct generation."""
    return bundle.generate(m, max_len)


##########################################################################
# Momentum reference queue


@dataclass
class QueueEntry:
    sample_id: str
    latent: LatentRep
    text: TokenSequence


class MomentumQueue:
    """Ring buffer of detached group-reference entries.

    Entries are encoded with a momentum copy of the source encoder f which
    follows the live parameters via theta <- m*theta + (1-m)*theta_live.
    """

    def __init__(self, bundle: ModelBundle, capacity: int,
                 momentum: float = 0.999):
        if capacity < 1:
            raise InvalidConfig("Queue capacity must be at least 1!")
        if not 0.0 <= momentum <= 1.0:
            raise InvalidConfig("Momentum must be in [0, 1], got %g!"
                                % momentum)
        self.bundle = bundle
        self.capacity = capacity
        self.momentum = momentum
        self.params = bundle.params.copy("f.")
        self._entries = collections.deque(maxlen=capacity)

    def __len__(self):
        return len(self._entries)

    def entries(self) -> typing.List[QueueEntry]:
        return list(self._entries)

    def group(self, exclude_id: str = None) -> typing.List[QueueEntry]:
        """Entries usable as group reference of the given anchor."""
        return [e for e in self._entries if e.sample_id != exclude_id]

    def push(self, sample) -> QueueEntry:
        """Encode a paired sample with the momentum encoder and enqueue it.
        The oldest entry is evicted when the queue is full."""
        with nc.no_tape():
            latent = self.bundle.encode_source(sample.features,
                                               params=self.params)
        entry = QueueEntry(sample.id, latent.detach(),
                           tokenize(sample.text, self.bundle.vocab))
        self._entries.append(entry)
        logger.debug("queue push {} ({}/{})", sample.id, len(self),
                     self.capacity)
        return entry

    def update(self, live_params: ParamStore, momentum: float = None):
        """Move the momentum copy towards the live parameters."""
        m = self.momentum if momentum is None else momentum
        if not 0.0 <= m <= 1.0:
            raise InvalidConfig("Momentum must be in [0, 1], got %g!" % m)
        for name, p in self.params.items():
            p.data *= m
            p.data += (1.0 - m) * live_params[name].data


def queue_push(q: MomentumQueue, sample) -> MomentumQueue:
    q.push(sample)
    return q


def momentum_update(q: MomentumQueue, live_params: ParamStore,
                    m: float) -> ParamStore:
    q.update(live_params, m)
    return q.params
