##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides all training objectives. Every loss function
# returns a 1 x 1 Matrix built from numcore primitives, so it can be
# differentiated by a Tape. Per-sample losses are sums; averaging over a
# batch is left to the trainer.
#
# Besides the objective terms of the translation model
#
#     loss = m2m + t2t + m2t + alpha*gtp + beta*sentiment + gamma*reg
#
# the module provides the comparison losses pairwise, triplet and
# contrastive, the feature augmentation of the contrastive loss, the
# triplet mining rule and random mini-instances of every loss for the
# gradient check.
#
##########################################################################

import typing
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import InvalidConfig, InvalidInput, ShapeError
from .model import (SENTIMENT_CLASSES, LatentRep, ModelBundle, ModelShape,
                    QueueEntry)
from .numcore import Matrix, ParamStore
from .simkernel import bleu_profile, cosine_profile
from .textmetric import BOS, EOS, PAD, TokenSequence, Vocabulary, tokenize

LOSS_NAMES = (
    "m2m",
    "t2t",
    "m2t",
    "bwd_map",
    "gtp",
    "sentiment",
    "pairwise",
    "triplet",
    "contrastive",
)


def _values(x) -> Matrix:
    if isinstance(x, LatentRep):
        return x.values
    return nc.as_matrix(x)


def _zero() -> Matrix:
    return Matrix(0.0)


##########################################################################
# Objective terms


def loss_m2m(m, recon) -> Matrix:
    """Squared Frobenius norm |m - recon|^2 of a source reconstruction."""
    m, recon = nc.as_matrix(m), nc.as_matrix(recon)
    if m.shape != recon.shape:
        raise ShapeError("Reconstruction of shape %s does not match %s!"
                         % (recon.shape, m.shape))
    return nc.sqdist(m, recon)


def loss_t2t(t: TokenSequence, logits) -> Matrix:
    """Mean token cross-entropy of teacher-forced logits.

    Row i of logits predicts token i+1 of t, so logits must have
    len(t.tokens) - 1 rows. PAD targets are masked out.
    """
    logits = nc.as_matrix(logits)
    targets = np.asarray(t.tokens[1:], dtype=np.int64)
    if logits.rows != len(targets):
        raise ShapeError("Got %d logit rows for %d target tokens!"
                         % (logits.rows, len(targets)))
    rows = np.flatnonzero(targets != PAD)
    if not rows.size:
        return _zero()
    logp = nc.pick(nc.log_softmax(logits), rows, targets[rows])
    return nc.scale(nc.sum(logp), -1.0 / rows.size)


def loss_m2t(music_latent, mapped_text_latent) -> Matrix:
    """Squared Euclidean distance between f(m) and M_fwd(g(t))."""
    return nc.sqdist(_values(music_latent), _values(mapped_text_latent))


def loss_bwd_map(music_latent, text_latent) -> Matrix:
    """Squared distance between M_bwd(f(m)) and g(t). Mirrors loss_m2t for
    the generation half of the mapping auto-encoder."""
    a, b = _values(music_latent), _values(text_latent)
    if a.shape != b.shape:
        raise ShapeError("Latents of shape %s and %s differ!"
                         % (a.shape, b.shape))
    return nc.sqdist(a, b)


def gtp_distance(cos_row, text_sims, temperature: float = 1.0) -> Matrix:
    """Squared distance of the softmax-normalized source and target
    similarity profiles. text_sims is a constant."""
    cos_row = nc.as_matrix(cos_row)
    text_sims = np.asarray(text_sims, dtype=nc.DTYPE).reshape(1, -1)
    if cos_row.shape != text_sims.shape:
        raise ShapeError("Similarity profiles of shape %s and %s differ!"
                         % (cos_row.shape, text_sims.shape))
    if not cos_row.cols:
        raise InvalidInput("Empty group reference!")
    p_source = nc.softmax(nc.scale(cos_row, 1.0 / temperature))
    p_target = nc.softmax(Matrix(text_sims / temperature))
    return nc.sqdist(p_source, p_target)


def loss_gtp(latent: LatentRep, text, group: typing.Sequence[QueueEntry],
             temperature: float = 1.0, max_n: int = 2,
             smoothing: bool = True, symmetric: bool = False,
             text_sims: np.ndarray = None) -> Matrix:
    """Group topology-preservation loss of one anchor.

    Compares the cosine profile of the anchor latent f(m) against the
    queue latents with the BLEU profile of the anchor text against the
    queue texts. Gradients reach the anchor latent only.

    Args:
        latent: Live source latent of the anchor.
        text: Anchor text (TokenSequence or raw string).
        group: Queue entries, the anchor excluded.
        temperature: Softmax temperature of both profiles.
        max_n: BLEU order of the text profile.
        smoothing: BLEU smoothing of the text profile.
        symmetric: Average BLEU over both argument orders.
        text_sims: Precomputed BLEU profile of the anchor text against
                   the group. The text arguments are ignored if given.
    """
    if not len(group):
        raise InvalidInput("Empty group reference!")
    cos_row = cosine_profile(latent.flatten(), [e.latent for e in group])
    if text_sims is None:
        text_sims = bleu_profile(text, [e.text for e in group], max_n,
                                 smoothing, symmetric)
    return gtp_distance(cos_row, text_sims, temperature)


def loss_sentiment(s, predicted) -> Matrix:
    """Squared distance between reference and predicted 7-class
    distributions."""
    s, predicted = nc.as_matrix(s), nc.as_matrix(predicted)
    n = len(SENTIMENT_CLASSES)
    if s.shape != (1, n) or predicted.shape != (1, n):
        raise ShapeError("Sentiment distributions need %d classes!" % n)
    return nc.sqdist(s, predicted)


@dataclass
class LossBreakdown:
    """Values of all objective terms and their weighted total."""

    m2m: float = 0.0
    t2t: float = 0.0
    m2t: float = 0.0
    gtp: float = 0.0
    sentiment: float = 0.0
    reg: float = 0.0
    total: float = 0.0
    alpha: float = 500.0
    beta: float = 5.0
    gamma: float = 0.25

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "LossBreakdown":
        return cls(**{k: float(v) for k, v in data.items()})


TERMS = ("m2m", "t2t", "m2t", "gtp", "sentiment", "reg")


def _check_coefficients(alpha: float, beta: float, gamma: float):
    for name, value in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
        if value < 0:
            raise InvalidConfig("Loss coefficient %s must not be negative!"
                                % name)


def loss_total(parts: dict, alpha: float = 500.0, beta: float = 5.0,
               gamma: float = 0.25) -> LossBreakdown:
    """Combine term values into a LossBreakdown.

    Args:
        parts: Mapping of term name to float or 1 x 1 Matrix. Missing terms
               count as 0.
        alpha: Weight of the topology term.
        beta: Weight of the sentiment term.
        gamma: Weight of the parameter regularizer.
    """
    _check_coefficients(alpha, beta, gamma)
    unknown = set(parts) - set(TERMS)
    if unknown:
        raise InvalidInput("Unknown loss terms %s!" % sorted(unknown))
    values = {}
    for key in TERMS:
        value = parts.get(key, 0.0)
        values[key] = value.item() if isinstance(value, Matrix) \
            else float(value)
    total = (values["m2m"] + values["t2t"] + values["m2t"]
             + alpha * values["gtp"] + beta * values["sentiment"]
             + gamma * values["reg"])
    return LossBreakdown(total=total, alpha=alpha, beta=beta, gamma=gamma,
                         **values)


def weighted_objective(terms: dict, alpha: float = 500.0,
                       beta: float = 5.0) -> Matrix:
    """Differentiable weighted sum of the Matrix valued terms. The
    regularizer is realised by the optimizer as weight decay."""
    _check_coefficients(alpha, beta, 0.0)
    weights = {"m2m": 1.0, "t2t": 1.0, "m2t": 1.0, "gtp": alpha,
               "sentiment": beta}
    total = _zero()
    for key, value in terms.items():
        if key not in weights:
            raise InvalidInput("Term '%s' has no gradient path!" % key)
        total = nc.add(total, nc.scale(value, weights[key]))
    return total


##########################################################################
# Comparison losses


def loss_triplet(anchor, positive, negative, margin: float = 0.2) -> Matrix:
    """max(0, |a-p|^2 - |a-n|^2 + margin)"""
    a, p, n = _values(anchor), _values(positive), _values(negative)
    d_pos = nc.sqdist(a, p)
    d_neg = nc.sqdist(a, n)
    return nc.relu(nc.add(nc.sub(d_pos, d_neg), margin))


def loss_pairwise(latent_i, latent_j, text_sim: float,
                  threshold: float = 0.1) -> Matrix:
    """|z_i - z_j|^2 if the texts are similar (BLEU >= threshold), else 0."""
    a, b = _values(latent_i), _values(latent_j)
    if a.shape != b.shape:
        raise ShapeError("Latents of shape %s and %s differ!"
                         % (a.shape, b.shape))
    if text_sim < threshold:
        return _zero()
    return nc.sqdist(a, b)


def _cos(a: Matrix, b: Matrix) -> Matrix:
    return nc.div(nc.dot(a, b), nc.mul(nc.norm(a), nc.norm(b)))


def loss_contrastive(latent, augmented, negatives: typing.Sequence,
                     temperature: float = 0.5) -> Matrix:
    """NT-Xent loss of an anchor against its augmented view.

    -log(exp(cos(z, z+)/T) / sum_c exp(cos(z, c)/T)), where c runs over
    the augmented view and all negatives.
    """
    if not len(negatives):
        raise InvalidInput("Contrastive loss needs at least one negative!")
    if temperature <= 0:
        raise InvalidConfig("Contrastive temperature must be positive!")
    z = _values(latent).flatten()
    candidates = [_values(augmented)] + [_values(n) for n in negatives]
    for c in candidates:
        if c.data.size != z.cols:
            raise ShapeError("Candidate of shape %s does not match anchor!"
                             % (c.shape,))
    sims = nc.transpose(nc.concat_rows([_cos(z, c.flatten())
                                        for c in candidates]))
    logp = nc.log_softmax(nc.scale(sims, 1.0 / temperature))
    return nc.scale(nc.pick(logp, [0], [0]), -1.0)


def augment(m: np.ndarray, rng: np.random.Generator, noise: float = 0.01,
            mask: float = 0.1, jitter: float = 0.05) -> np.ndarray:
    """Positive view of a feature matrix for the contrastive loss: global
    scale jitter, a random time mask and additive Gaussian noise."""
    m = np.asarray(m, dtype=nc.DTYPE)
    out = m * rng.uniform(1.0 - jitter, 1.0 + jitter)
    frames = m.shape[1]
    n_mask = min(frames - 1, int(round(mask * frames)))
    if n_mask > 0:
        out[:, rng.choice(frames, size=n_mask, replace=False)] = 0.0
    return out + rng.normal(0.0, noise, m.shape)


def mine_triplets(sims: np.ndarray,
                  limit: int = None
                  ) -> typing.List[typing.Tuple[int, int, int]]:
    """Mine (anchor, positive, negative) index triplets within a batch.

    The positive of an anchor is its partner with the highest text
    similarity, the negative the one with the lowest. Ties go to the
    lowest index.

    Args:
        sims: B x B text similarity matrix of the batch.
        limit: Maximum number of triplets.
    """
    sims = np.asarray(sims)
    n = sims.shape[0]
    triplets = []
    if n < 3:
        return triplets
    for a in range(n):
        others = [j for j in range(n) if j != a]
        pos = max(others, key=lambda j: (sims[a, j], -j))
        neg = min(others, key=lambda j: (sims[a, j], j))
        if pos != neg:
            triplets.append((a, pos, neg))
        if limit is not None and len(triplets) >= limit:
            break
    return triplets


##########################################################################
# Random mini-instances for gradient checks


WORDS = ("bright", "slow", "piano", "the", "a", "calm", "strings")


def _text(rng: np.random.Generator, words: typing.Sequence[str]) -> str:
    return " ".join(rng.choice(words, size=rng.integers(3, 8)))


def gradcheck_instance(name: str, seed: int
                       ) -> typing.Tuple[typing.Callable[[], Matrix],
                                         ParamStore]:
    """Return a small random loss function of the given kind and the
    parameters it depends on.

    Most instances feed random constant inputs through linear maps whose
    weights are the checked parameters. The sentiment instance runs a tiny
    ModelBundle and checks the source encoder at the start of its chain.
    """
    rng = np.random.default_rng(seed)
    params = ParamStore()

    def linear(key, rows, cols, out):
        x = rng.normal(size=(rows, cols))
        params.add(key, rng.normal(size=(cols, out)) / np.sqrt(cols))
        return lambda: nc.matmul(x, params[key])

    if name == "m2m":
        recon = linear("w", 3, 4, 5)
        m = rng.normal(size=(3, 5))
        return lambda: loss_m2m(m, nc.tanh(recon())), params

    if name == "t2t":
        vocab = 6
        tokens = [BOS] + list(rng.integers(3, vocab, size=4)) + [PAD, EOS]
        seq = TokenSequence(tokens)
        logits = linear("w", len(tokens) - 1, 4, vocab)
        return lambda: loss_t2t(seq, logits()), params

    if name == "m2t":
        a = linear("wa", 2, 3, 4)
        b = linear("wb", 2, 3, 4)
        return lambda: loss_m2t(LatentRep(a()), LatentRep(b())), params

    if name == "bwd_map":
        a = linear("wa", 2, 3, 4)
        b = linear("wb", 2, 3, 4)
        return lambda: loss_bwd_map(a(), b()), params

    if name == "gtp":
        z = linear("w", 2, 3, 4)
        group = [QueueEntry("q%d" % i, LatentRep(Matrix(rng.normal(
            size=(2, 4)))), _text(rng, WORDS)) for i in range(5)]
        text = _text(rng, WORDS)
        return lambda: loss_gtp(LatentRep(z()), text, group), params

    if name == "sentiment":
        # full chain h(g'(M_bwd(f(m)))) of a tiny model, checked in f
        vocab = Vocabulary.build(_text(rng, WORDS) for _ in range(3))
        shape = ModelShape(bins=3, segments=2, dim=3, kernel=1,
                           vocab_size=len(vocab), max_positions=8,
                           head_hidden=3)
        bundle = ModelBundle(shape, vocab, seed)
        m = rng.normal(size=(3, 4)) + 1.0
        seq = tokenize(_text(rng, WORDS), vocab)
        s = np.zeros((1, len(SENTIMENT_CLASSES)))
        s[0, rng.integers(len(SENTIMENT_CLASSES))] = 1.0
        return (lambda: loss_sentiment(s, bundle.predict_sentiment(
            bundle.encode_source(m), seq)),
            bundle.params.subset("f."))

    if name == "pairwise":
        a = linear("wa", 2, 3, 4)
        b = linear("wb", 2, 3, 4)
        return lambda: loss_pairwise(a(), b(), 1.0, 0.1), params

    if name == "triplet":
        a = linear("wa", 2, 3, 4)
        p = linear("wp", 2, 3, 4)
        n = linear("wn", 2, 3, 4)
        margin = float(rng.uniform(0.5, 5.0))
        return lambda: loss_triplet(a(), p(), n(), margin), params

    if name == "contrastive":
        z = linear("wz", 2, 3, 4)
        zp = linear("wp", 2, 3, 4)
        negs = [linear("wn%d" % i, 2, 3, 4) for i in range(3)]
        return lambda: loss_contrastive(
            z(), zp(), [n() for n in negs], 0.5), params

    raise InvalidInput("Unknown loss '%s'!" % name)
