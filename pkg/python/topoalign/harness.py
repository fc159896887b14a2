##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the experiment harness: fold-wise pre-training,
# joint training with one of the loss variants, evaluation by greedy
# generation, the tag baselines, parameter sweeps, the gradient check
# and figure export.
#
# Loss variants:
#
# coordinate:        m2m + t2t + m2t
# +pairwise:         coordinate + alpha * pairwise
# +triplet:          coordinate + alpha * triplet
# +contrastive:      coordinate + alpha * contrastive
# +sentiment:        coordinate + beta * sentiment
# +gtp:              coordinate + alpha * gtp
# ours:              coordinate + alpha * gtp + beta * sentiment
# ours_no_sentiment: coordinate + alpha * gtp
# encoder_decoder:   t2t of g'(f(m)) only
#
# The comparison losses take the slot of the topology term. The m2t term
# includes the mirrored loss of M_bwd. With generation_loss, the t2t term
# also includes the teacher-forced loss of g'(M_bwd(f(m))), the path used
# for generation. The regularizer gamma * 1/2|theta|^2 is applied by the
# optimizer as weight decay.
#
# Runs are written as RunArchive directories below the output directory
# of the configuration.
#
##########################################################################

import functools
import math
import os
import typing
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from . import jsonschema
from . import numcore as nc
from .archive import RunArchive
from .config import RunConfig
from .data import (FoldSplit, PairedSample, corpus_statistics, kfold_split,
                   lexicon_sentiment, load_dataset, lookup_representative,
                   save_dataset, sentiment_distribution, synth_generate,
                   tags_knn, tags_representative)
from .errors import InvalidConfig, InvalidInput, IoError, NumericError
from .filebase import JsonLinesFile
from .losses import (LOSS_NAMES, LossBreakdown, augment, gradcheck_instance,
                     loss_bwd_map, loss_contrastive, loss_gtp, loss_m2m,
                     loss_m2t, loss_pairwise, loss_sentiment, loss_t2t,
                     loss_total, loss_triplet, mine_triplets,
                     weighted_objective)
from .model import (SOURCE_TO_TEXT, TEXT_TO_SOURCE, ModelBundle,
                    MomentumQueue, generate)
from .numcore import ParamStore
from .plotting import PLOT_KINDS, render_plot
from .simkernel import (SpreadStats, cosine, pairwise_cosine_matrix, pearson,
                        similarity_spread_stats)
from .textmetric import (TokenSequence, Vocabulary, bleu, corpus_bleu,
                         detokenize, symmetric_bleu, tokenize)

VARIANT_TERMS = {
    "coordinate": (),
    "+pairwise": ("pairwise",),
    "+triplet": ("triplet",),
    "+contrastive": ("contrastive",),
    "+sentiment": ("sentiment",),
    "+gtp": ("gtp",),
    "ours": ("gtp", "sentiment"),
    "ours_no_sentiment": ("gtp",),
    "encoder_decoder": None,
}

PRETRAIN_PREFIXES = ("f.", "fd.", "g.", "gd.")
SWEEP_PARAMS = ("k", "alpha")


##########################################################################
# Metrics records


@dataclass
class MetricsRecord:
    """One line of a metrics.jsonl file."""

    run_id: str
    fold: int
    seed: int
    phase: str
    epoch: int
    variant: str = ""
    losses: dict = None
    bleu: float = None
    spread: dict = None
    sentiment: dict = None
    pairs: list = None
    extra: dict = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsRecord":
        return cls(**data)


class MetricsLog:
    """Validated stream of metrics records.

    Within one fold, seed and phase the epochs must not decrease.
    """

    def __init__(self):
        self.records: typing.List[MetricsRecord] = []
        self._last = {}

    def __len__(self):
        return len(self.records)

    def append(self, record: MetricsRecord) -> MetricsRecord:
        key = (record.fold, record.seed, record.phase)
        if record.epoch < self._last.get(key, 0):
            raise InvalidInput("Epoch %d of %s record precedes epoch %d!"
                               % (record.epoch, record.phase,
                                  self._last[key]))
        jsonschema.validate(record.to_dict(), "metrics")
        self._last[key] = record.epoch
        self.records.append(record)
        return record

    def extend(self, other: "MetricsLog"):
        for record in other.records:
            self.append(record)

    def select(self, phase: str = None,
               fold: int = None) -> typing.List[MetricsRecord]:
        return [r for r in self.records
                if (phase is None or r.phase == phase)
                and (fold is None or r.fold == fold)]

    def to_list(self) -> typing.List[dict]:
        return [r.to_dict() for r in self.records]


def read_metrics(path: str) -> typing.List[dict]:
    """Read the records of a metrics.jsonl file."""
    try:
        with open(path, "rb") as fp:
            data = fp.read()
    except OSError as error:
        raise IoError("Cannot read metrics file '%s': %s!"
                      % (path, error.strerror or error))
    return JsonLinesFile(data).data


##########################################################################
# Fold training


@dataclass
class FoldResult:
    """Outcome of training and evaluating one fold with one seed."""

    fold: int
    seed: int
    bleu: float
    pretrain_bleu: float
    params: ParamStore
    vocab: Vocabulary
    losses: LossBreakdown
    generated: typing.List[typing.Tuple[str, str]] = field(
        default_factory=list)
    spread_before: SpreadStats = None
    spread_after: SpreadStats = None
    reference_sentiment: np.ndarray = None
    generated_sentiment: np.ndarray = None
    pearson: float = 0.0
    pairs: typing.List[typing.Tuple[float, float]] = field(
        default_factory=list)


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield [int(i) for i in order[start:start + size]]


def _spread(bundle: ModelBundle,
            samples: typing.Sequence[PairedSample]) -> SpreadStats:
    if len(samples) < 2:
        return None
    with nc.no_tape():
        latents = [bundle.encode_source(s.features) for s in samples]
    return similarity_spread_stats(pairwise_cosine_matrix(latents))


class FoldTrainer:
    """Trains the model of one fold with one seed.

    Args:
        config: Validated run configuration.
        train: Samples of the train split.
        seed: Seed of parameter initialization and batch order.
        fold: Fold index, used for logging and metrics.
        log: Metrics log receiving the epoch records.
        run_id: Run id of the metrics records.
    """

    def __init__(self, config: RunConfig,
                 train: typing.Sequence[PairedSample], seed: int,
                 fold: int = 0, log: MetricsLog = None, run_id: str = ""):
        if not len(train):
            raise InvalidInput("Fold %d has no training samples!" % fold)
        self.config = config
        self.train = list(train)
        self.seed = seed
        self.fold = fold
        self.log = log if log is not None else MetricsLog()
        self.run_id = run_id or "train"
        self.terms = VARIANT_TERMS[config.variant]
        self.vocab = Vocabulary.build(s.text for s in self.train)
        self.bundle = ModelBundle.from_config(config, self.vocab, seed)
        if self.terms is None:
            self.bundle.direct_generation = True
        self.rng = np.random.default_rng(seed)
        self.seqs = {s.id: tokenize(s.text, self.vocab) for s in self.train}
        self.texts = {s.id: s.text for s in self.train}
        self.queue = None
        self._bleu_cache = {}

    def _record(self, phase: str, epoch: int, **kwargs) -> MetricsRecord:
        return self.log.append(MetricsRecord(
            self.run_id, self.fold, self.seed, phase, epoch,
            self.config.variant, **kwargs))

    def text_similarity(self, a: str, b: str) -> float:
        """Memoized BLEU of the train text a against the train text b."""
        key = (a, b)
        if key not in self._bleu_cache:
            score = symmetric_bleu if self.config.symmetric_bleu else bleu
            self._bleu_cache[key] = score(self.texts[a], self.texts[b],
                                          self.config.gtp_max_n, True)
        return self._bleu_cache[key]

    # Pre-training

    def pretrain(self) -> float:
        """Train the source and text auto-encoders on reconstruction alone.

        Returns:
            float: Corpus BLEU of the text auto-encoder reconstructions of
                   the train texts.
        """
        cfg = self.config
        params = self.bundle.params.subset(PRETRAIN_PREFIXES)
        for epoch in range(cfg.pretrain_epochs):
            sums = {"m2m": 0.0, "t2t": 0.0}
            order = self.rng.permutation(len(self.train))
            for batch in _batches(order, cfg.batch):
                params.zero_grad()
                for i in batch:
                    s = self.train[i]
                    seq = self.seqs[s.id]
                    with nc.Tape() as tape:
                        z_m = self.bundle.encode_source(s.features)
                        m2m = loss_m2m(s.features, self.bundle.decode_source(
                            z_m, s.frames))
                        t2t = loss_t2t(seq, self.bundle.decode_text(
                            self.bundle.encode_text(seq), seq))
                        loss = nc.scale(nc.add(m2m, t2t), 1.0 / len(batch))
                    nc.backward(loss, tape, params)
                    sums["m2m"] += m2m.item()
                    sums["t2t"] += t2t.item()
                nc.adam_step(params, cfg.pretrain_lr)
            losses = {k: v / len(self.train) for k, v in sums.items()}
            self._record("pretrain", epoch + 1, losses=losses)
            logger.debug("fold {} seed {} pretrain epoch {}: m2m {:.4f} "
                         "t2t {:.4f}", self.fold, self.seed, epoch + 1,
                         losses["m2m"], losses["t2t"])
        self.bundle.params.reset_optimizer()

        pairs = []
        with nc.no_tape():
            for s in self.train:
                seq = self.seqs[s.id]
                latent = self.bundle.encode_text(seq)
                pairs.append((self.bundle.decode_text(
                    latent, max_len=cfg.max_len), s.text))
        score = corpus_bleu(pairs, max_n=cfg.eval_max_n)
        logger.info("fold {} seed {}: text auto-encoder BLEU {:.2f}",
                    self.fold, self.seed, score)
        return score

    # Joint training

    def _needs_queue(self) -> bool:
        return self.terms is not None and \
            ("gtp" in self.terms or "contrastive" in self.terms)

    def init_queue(self):
        """Create the momentum queue and fill it with the first k-1 train
        samples."""
        self.queue = MomentumQueue(self.bundle, self.config.k - 1,
                                   self.config.momentum)
        for s in self.train[:self.config.k - 1]:
            self.queue.push(s)

    def _sample_terms(self, s: PairedSample, seq: TokenSequence,
                      z_m) -> typing.Dict[str, nc.Matrix]:
        cfg = self.config
        b = self.bundle
        if self.terms is None:
            return {"t2t": loss_t2t(seq, b.decode_text(z_m, seq))}
        z_t = b.encode_text(seq)
        terms = {
            "m2m": loss_m2m(s.features, b.decode_source(z_m, s.frames)),
            "t2t": loss_t2t(seq, b.decode_text(z_t, seq)),
            "m2t": nc.add(
                loss_m2t(z_m, b.map_latent(z_t, TEXT_TO_SOURCE)),
                loss_bwd_map(b.map_latent(z_m, SOURCE_TO_TEXT), z_t)),
        }
        logits = None
        if cfg.generation_loss or "sentiment" in self.terms:
            logits = b.generation_logits(z_m, seq)
        if cfg.generation_loss:
            terms["t2t"] = nc.add(terms["t2t"], loss_t2t(seq, logits))
        if "gtp" in self.terms:
            group = self.queue.group(s.id)
            if group:
                sims = np.array([self.text_similarity(s.id, e.sample_id)
                                 for e in group])
                terms["gtp"] = loss_gtp(z_m, seq, group, cfg.temperature,
                                        text_sims=sims)
        if "sentiment" in self.terms:
            terms["sentiment"] = loss_sentiment(
                s.sentiment.reshape(1, -1),
                b.predict_sentiment(z_m, seq, logits))
        return terms

    def _batch_term(self, batch: typing.List[PairedSample],
                    latents: list) -> typing.Optional[nc.Matrix]:
        """Relational comparison loss of a batch, averaged."""
        cfg = self.config
        n = len(batch)
        if "pairwise" in self.terms:
            losses = [loss_pairwise(latents[i], latents[j],
                                    self.text_similarity(batch[i].id,
                                                         batch[j].id),
                                    cfg.pair_threshold)
                      for i in range(n) for j in range(i + 1, n)]
        elif "triplet" in self.terms:
            sims = np.array([[self.text_similarity(a.id, c.id)
                              if a.id != c.id else 1.0 for c in batch]
                             for a in batch])
            losses = [loss_triplet(latents[a], latents[p], latents[q],
                                   cfg.triplet_margin)
                      for a, p, q in mine_triplets(sims, limit=cfg.k)]
        elif "contrastive" in self.terms:
            losses = []
            for i, s in enumerate(batch):
                negatives = [z for j, z in enumerate(latents) if j != i]
                if not negatives:
                    negatives = [e.latent for e in self.queue.group(s.id)]
                if not negatives:
                    continue
                view = self.bundle.encode_source(
                    augment(s.features, self.rng))
                losses.append(loss_contrastive(
                    latents[i], view, negatives,
                    cfg.contrastive_temperature))
        else:
            return None
        if not losses:
            return None
        total = losses[0]
        for loss in losses[1:]:
            total = nc.add(total, loss)
        return nc.scale(total, 1.0 / len(losses))

    def joint_epoch(self, epoch: int) -> LossBreakdown:
        """Run one epoch of joint training and return the mean term
        values."""
        cfg = self.config
        params = self.bundle.params
        sums = {}
        order = self.rng.permutation(len(self.train))
        for index in _batches(order, cfg.batch):
            batch = [self.train[i] for i in index]
            params.zero_grad()
            with nc.Tape() as tape:
                terms = {}
                latents = []
                for s in batch:
                    z_m = self.bundle.encode_source(s.features)
                    latents.append(z_m)
                    for key, value in self._sample_terms(
                            s, self.seqs[s.id], z_m).items():
                        sums[key] = sums.get(key, 0.0) + value.item()
                        value = nc.scale(value, 1.0 / len(batch))
                        terms[key] = nc.add(terms[key], value) \
                            if key in terms else value
                if self.terms:
                    relational = self._batch_term(batch, latents)
                    if relational is not None:
                        terms["gtp"] = relational
                        sums["gtp"] = sums.get("gtp", 0.0) + \
                            relational.item() * len(batch)
                loss = weighted_objective(terms, cfg.alpha, cfg.beta)
            nc.backward(loss, tape, params)
            nc.adam_step(params, cfg.lr, weight_decay=cfg.gamma)
            if self.queue is not None:
                self.queue.update(params)
                for s in batch:
                    self.queue.push(s)

        parts = {k: v / len(self.train) for k, v in sums.items()}
        parts["reg"] = params.l2()
        breakdown = loss_total(parts, cfg.alpha, cfg.beta, cfg.gamma)
        self._record("joint", epoch, losses=breakdown.to_dict())
        logger.debug("fold {} seed {} joint epoch {}: total {:.4f}",
                     self.fold, self.seed, epoch, breakdown.total)
        return breakdown

    # Evaluation

    def evaluate(self, test: typing.Sequence[PairedSample]) -> dict:
        """Greedy generation on the test samples with corpus BLEU, latent
        similarity spread, BLEU/cosine pairs and sentiment agreement."""
        cfg = self.config
        if not len(test):
            raise InvalidInput("Fold %d has no test samples!" % self.fold)
        generated = [generate(self.bundle, s.features, cfg.max_len)
                     for s in test]
        score = corpus_bleu([(g, s.text) for g, s in zip(generated, test)],
                            max_n=cfg.eval_max_n)
        with nc.no_tape():
            latents = [self.bundle.encode_source(s.features) for s in test]
        pairs = [(bleu(test[i].text, test[j].text, cfg.eval_max_n, True),
                  cosine(latents[i], latents[j]))
                 for i in range(len(test)) for j in range(i + 1, len(test))]
        reference = sentiment_distribution(test)
        predicted = sentiment_distribution(
            [lexicon_sentiment(detokenize(g)) for g in generated])
        return {
            "bleu": score,
            "generated": [(s.id, detokenize(g))
                          for s, g in zip(test, generated)],
            "spread": _spread(self.bundle, test),
            "pairs": pairs,
            "reference": reference,
            "predicted": predicted,
            "pearson": pearson(reference, predicted),
        }

    def run(self, test: typing.Sequence[PairedSample]) -> FoldResult:
        cfg = self.config
        logger.info("fold {} seed {}: {} train, {} test samples, variant {}",
                    self.fold, self.seed, len(self.train), len(test),
                    cfg.variant)
        pretrain_bleu = self.pretrain()
        spread_before = _spread(self.bundle, test)
        if self._needs_queue():
            self.init_queue()
        losses = loss_total({}, cfg.alpha, cfg.beta, cfg.gamma)
        for epoch in range(1, cfg.joint_epochs + 1):
            losses = self.joint_epoch(epoch)
            logger.info("fold {} seed {} epoch {}/{}: loss {:.4f}",
                        self.fold, self.seed, epoch, cfg.joint_epochs,
                        losses.total)

        ev = self.evaluate(test)
        spread = {}
        if spread_before is not None:
            spread["before"] = spread_before.to_dict()
        if ev["spread"] is not None:
            spread["after"] = ev["spread"].to_dict()
        self._record(
            "eval", cfg.joint_epochs, losses=losses.to_dict(),
            bleu=ev["bleu"], spread=spread or None,
            sentiment={"reference": ev["reference"].tolist(),
                       "generated": ev["predicted"].tolist(),
                       "pearson": ev["pearson"]},
            pairs=[list(p) for p in ev["pairs"]],
            extra={"pretrain_bleu": pretrain_bleu})
        logger.info("fold {} seed {}: test BLEU {:.2f}", self.fold,
                    self.seed, ev["bleu"])
        return FoldResult(
            fold=self.fold, seed=self.seed, bleu=ev["bleu"],
            pretrain_bleu=pretrain_bleu, params=self.bundle.params.copy(),
            vocab=self.vocab, losses=losses, generated=ev["generated"],
            spread_before=spread_before, spread_after=ev["spread"],
            reference_sentiment=ev["reference"],
            generated_sentiment=ev["predicted"], pearson=ev["pearson"],
            pairs=ev["pairs"])


def _split_samples(samples: typing.Sequence[PairedSample], split: FoldSplit):
    split.check_disjoint()
    by_id = {s.id: s for s in samples}
    missing = [i for i in split.train_ids + split.test_ids if i not in by_id]
    if missing:
        raise InvalidInput("Unknown sample ids %s in fold %d!"
                           % (missing[:5], split.index))
    return ([by_id[i] for i in split.train_ids],
            [by_id[i] for i in split.test_ids])


def train_fold(config: RunConfig, samples: typing.Sequence[PairedSample],
               split: FoldSplit, seed: int, log: MetricsLog = None,
               run_id: str = "") -> FoldResult:
    """Pre-train, joint-train and evaluate one fold with one seed. The
    vocabulary and all training data come from the train ids only."""
    train, test = _split_samples(samples, split)
    trainer = FoldTrainer(config, train, seed, split.index, log, run_id)
    return trainer.run(test)


##########################################################################
# Statistics


@dataclass
class Aggregate:
    """Mean and population standard deviation per fold and overall."""

    per_fold: typing.Dict[int, typing.Tuple[float, float, int]]
    mean: float
    std: float
    count: int

    def to_dict(self) -> dict:
        return {
            "per_fold": [{"fold": f, "mean": m, "std": s, "trials": n}
                         for f, (m, s, n) in sorted(self.per_fold.items())],
            "mean": self.mean,
            "std": self.std,
            "count": self.count,
        }


def aggregate(results: typing.Sequence, key: str = "bleu") -> Aggregate:
    """Aggregate a metric of fold results (or dicts with the fields fold
    and the metric)."""
    if not len(results):
        raise InvalidInput("Nothing to aggregate!")

    def get(r, name):
        return r[name] if isinstance(r, dict) else getattr(r, name)

    groups = {}
    for r in results:
        groups.setdefault(int(get(r, "fold")), []).append(float(get(r, key)))
    per_fold = {f: (float(np.mean(v)), float(np.std(v)), len(v))
                for f, v in groups.items()}
    values = [v for vs in groups.values() for v in vs]
    return Aggregate(per_fold, float(np.mean(values)), float(np.std(values)),
                     len(values))


@dataclass
class SignTest:
    p_value: float
    wins: int
    losses: int
    ties: int


def sign_test(a: typing.Sequence[float],
              b: typing.Sequence[float]) -> SignTest:
    """Two-sided paired sign test of a against b. Ties are dropped."""
    if len(a) != len(b):
        raise InvalidInput("Sign test needs paired samples of equal "
                           "length!")
    diffs = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    wins = int(np.sum(diffs > 0))
    losses = int(np.sum(diffs < 0))
    ties = len(diffs) - wins - losses
    n = wins + losses
    if n == 0:
        return SignTest(1.0, wins, losses, ties)
    tail = sum(math.comb(n, i) for i in range(min(wins, losses) + 1))
    return SignTest(min(1.0, 2.0 * tail / 2 ** n), wins, losses, ties)


def fold_means(records: typing.Sequence[dict],
               variant: str = None) -> typing.Dict[int, float]:
    """Mean test BLEU per fold of the eval and baseline records of a
    metrics file, optionally restricted to one variant."""
    groups = {}
    for r in records:
        if r.get("phase") not in ("eval", "baseline") or r.get("bleu") is None:
            continue
        if variant is not None and r.get("variant") != variant:
            continue
        groups.setdefault(r["fold"], []).append(r["bleu"])
    return {f: float(np.mean(v)) for f, v in sorted(groups.items())}


def compare_runs(records_a: typing.Sequence[dict],
                 records_b: typing.Sequence[dict], variant_a: str = None,
                 variant_b: str = None) -> SignTest:
    """Sign test of the per-fold BLEU means of two runs over their common
    folds."""
    a = fold_means(records_a, variant_a)
    b = fold_means(records_b, variant_b)
    folds = sorted(set(a) & set(b))
    if not folds:
        raise InvalidInput("The runs have no evaluated fold in common!")
    return sign_test([a[f] for f in folds], [b[f] for f in folds])


##########################################################################
# Commands


@dataclass
class TrainReport:
    run_id: str
    results: typing.List[FoldResult]
    aggregate: Aggregate
    log: MetricsLog
    directory: str = None


def make_run_id(command: str, config: RunConfig,
                variant: str = None) -> str:
    return "%s-%s-s%d" % (command, variant or config.variant, config.seed)


def load_samples(config: RunConfig) -> typing.List[PairedSample]:
    """Dataset of the configuration. Without a dataset path a synthetic
    corpus of config.n samples is generated from config.seed."""
    if config.dataset:
        samples = load_dataset(config.dataset)
    else:
        samples = synth_generate(config.n, config.seed, config.bins)
    for s in samples:
        if s.features.shape[0] != config.bins:
            raise InvalidConfig("Sample %s has %d bins, config expects %d!"
                                % (s.id, s.features.shape[0], config.bins))
    return samples


def _archive(config: RunConfig, rid: str, log: MetricsLog) -> RunArchive:
    data = config.to_dict()
    jsonschema.validate(data, "config")
    return RunArchive({"config.json": data,
                       "metrics.jsonl": log.to_list()}, run_id=rid)


def _write(archive: RunArchive, config: RunConfig) -> str:
    directory = os.path.join(config.out_dir, archive.run_id)
    archive.write(directory)
    return directory


def cmd_train(config: RunConfig,
              samples: typing.Sequence[PairedSample] = None,
              write: bool = True) -> TrainReport:
    """Cross-validated training: config.folds splits drawn from
    config.seed, config.trials seeds per split (seed, seed+1, ...)."""
    config.validate()
    if samples is None:
        samples = load_samples(config)
    rid = make_run_id("train", config)
    log = MetricsLog()
    results = []
    splits = kfold_split([s.id for s in samples], config.folds, config.seed)
    for split in splits:
        for trial in range(config.trials):
            results.append(train_fold(config, samples, split,
                                      config.seed + trial, log, rid))
    agg = aggregate(results)
    logger.info("{}: BLEU {:.2f} +- {:.2f} over {} runs", rid, agg.mean,
                agg.std, agg.count)

    report = TrainReport(rid, results, agg, log)
    if write:
        archive = _archive(config, rid, log)
        for r in results:
            prefix = "fold%d/" % r.fold
            archive[prefix + "vocab.vocab"] = r.vocab
            archive[prefix + "s%d/weights.tawt" % r.seed] = r.params
            archive[prefix + "s%d/generated.txt" % r.seed] = "".join(
                "%s\t%s\n" % (i, text) for i, text in r.generated)
        archive.summary["bleu"] = agg.to_dict()
        report.directory = _write(archive, config)
    return report


@dataclass
class BaselineReport:
    run_id: str
    scores: typing.Dict[str, Aggregate]
    log: MetricsLog
    directory: str = None


def cmd_baseline(config: RunConfig,
                 samples: typing.Sequence[PairedSample] = None,
                 write: bool = True) -> BaselineReport:
    """Tag kNN and tag representative baselines on the folds of
    cmd_train. Representatives are selected on the train split only."""
    config.validate()
    if samples is None:
        samples = load_samples(config)
    for s in samples:
        if s.tags is None:
            raise InvalidInput("Sample %s has no tags!" % s.id)
    rid = make_run_id("baseline", config, "tags")
    log = MetricsLog()
    results = {"tags_knn": [], "tags_representative": []}
    for split in kfold_split([s.id for s in samples], config.folds,
                             config.seed):
        train, test = _split_samples(samples, split)
        table = tags_representative(train, config.eval_max_n)
        hyps = {
            "tags_knn": [tags_knn(s.tags, train) for s in test],
            "tags_representative": [lookup_representative(s.tags, table)
                                    for s in test],
        }
        for name, texts in hyps.items():
            score = corpus_bleu([(h, s.text) for h, s in zip(texts, test)],
                                max_n=config.eval_max_n)
            log.append(MetricsRecord(rid, split.index, config.seed,
                                     "baseline", 0, name, bleu=score))
            results[name].append({"fold": split.index, "bleu": score})
            logger.info("fold {} {}: BLEU {:.2f}", split.index, name, score)
    scores = {name: aggregate(r) for name, r in results.items()}

    report = BaselineReport(rid, scores, log)
    if write:
        archive = _archive(config, rid, log)
        archive.summary["bleu"] = {k: v.to_dict() for k, v in scores.items()}
        report.directory = _write(archive, config)
    return report


@dataclass
class SweepReport:
    run_id: str
    param: str
    values: list
    aggregates: typing.List[Aggregate]
    log: MetricsLog
    directory: str = None

    def rows(self) -> typing.List[list]:
        rows = [[self.param, "bleu_mean", "bleu_std"]]
        for value, agg in zip(self.values, self.aggregates):
            rows.append(["%g" % value, "%.6f" % agg.mean, "%.6f" % agg.std])
        return rows


def cmd_sweep(config: RunConfig, param: str, values: typing.Sequence,
              samples: typing.Sequence[PairedSample] = None,
              write: bool = True) -> SweepReport:
    """One cross-validated training per value of k or alpha."""
    if param not in SWEEP_PARAMS:
        raise InvalidConfig("Cannot sweep parameter '%s'!" % param)
    if not len(values):
        raise InvalidInput("Sweep needs at least one value!")
    unique = []
    for value in values:
        if value in unique:
            logger.warning("skipping duplicate sweep value {}={}", param,
                           value)
            continue
        unique.append(value)
    configs = [config.replace(**{param: v}) for v in unique]
    if samples is None:
        samples = load_samples(config)

    rid = make_run_id("sweep", config)
    log = MetricsLog()
    aggregates = []
    items = {}
    for index, (value, cfg) in enumerate(zip(unique, configs)):
        logger.info("sweep {}={} ({}/{})", param, value, index + 1,
                    len(unique))
        report = cmd_train(cfg, samples, write=False)
        aggregates.append(report.aggregate)
        items["%s_%g/metrics.jsonl" % (param, value)] = report.log.to_list()
        log.append(MetricsRecord(
            rid, -1, config.seed, "sweep", index, config.variant,
            bleu=report.aggregate.mean,
            extra={"param": param, "value": value,
                   "bleu_std": report.aggregate.std}))

    report = SweepReport(rid, param, unique, aggregates, log)
    if write:
        archive = _archive(config, rid, log)
        for path, records in items.items():
            archive[path] = records
        archive["sweep.csv"] = report.rows()
        report.directory = _write(archive, config)
    return report


@dataclass
class LossCheck:
    name: str
    instances: int
    failures: int
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass
class GradcheckSummary:
    tol: float
    checks: typing.List[LossCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> typing.List[str]:
        return [c.name for c in self.checks if not c.passed]

    def __str__(self):
        s = ["Gradient check %s (tol %g)"
             % ("passed" if self.passed else "FAILED", self.tol)]
        for c in self.checks:
            s.append("  %-12s %4d instances  max rel. error %.3e  %s"
                     % (c.name, c.instances, c.max_rel_error,
                        "ok" if c.passed else "FAIL (%d)" % c.failures))
        return "\n".join(s)


def cmd_gradcheck(instances: int = 100, h: float = 1e-6, tol: float = 1e-5,
                  seed: int = 0,
                  hook: typing.Callable[[str, dict], None] = None
                  ) -> GradcheckSummary:
    """Finite-difference check of every loss on random mini-instances.

    Args:
        instances: Random instances per loss.
        h: Finite-difference step.
        tol: Relative error tolerance.
        seed: Seed of the first instance.
        hook: Optional callable(loss_name, analytic_grads) which may
              modify the analytic gradients.
    """
    if instances < 1:
        raise InvalidInput("Gradient check needs at least one instance!")
    checks = []
    for name in LOSS_NAMES:
        failures = 0
        worst = 0.0
        for i in range(instances):
            loss_fn, params = gradcheck_instance(name, seed + i)
            analytic_hook = None if hook is None else \
                functools.partial(hook, name)
            report = nc.finite_diff_check(loss_fn, params, h, tol,
                                          analytic_hook=analytic_hook)
            worst = max(worst, report.max_rel_error)
            if not report.passed:
                failures += 1
        checks.append(LossCheck(name, instances, failures, worst))
        if failures:
            logger.warning("gradient check of {} failed in {} of {} "
                           "instances", name, failures, instances)
        else:
            logger.info("gradient check of {}: max rel. error {:.3e}", name,
                        worst)
    return GradcheckSummary(tol, checks)


def cmd_plot(path: str, kind: str, out: str) -> str:
    """Render a figure from a metrics file into an SVG file."""
    if kind not in PLOT_KINDS:
        raise InvalidConfig("Unknown plot kind '%s'!" % kind)
    svg = render_plot(kind, read_metrics(path))
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(svg)
    except OSError as error:
        raise IoError("Cannot write figure '%s': %s!"
                      % (out, error.strerror or error))
    logger.info("wrote {} to {}", kind, out)
    return svg


def cmd_synth(n: int = 200, seed: int = 0, out: str = "synthetic.jsonl",
              bins: int = 32, segments: int = 4, cosine_min: float = 0.95,
              below_min: float = 0.9):
    """Generate a synthetic corpus, check its statistics and write it.

    Args:
        n: Number of samples.
        seed: Corpus seed.
        out: Dataset file to write.
        bins: Number of frequency bins.
        segments: Segments of the pooled feature summary.
        cosine_min: Minimum mean pairwise feature cosine.
        below_min: Minimum fraction of text pairs with BLEU below 0.06.

    Raises:
        NumericError: The corpus misses a target statistic. Nothing is
                      written in this case.
    """
    samples = synth_generate(n, seed, bins)
    stats = corpus_statistics(samples, segments)
    if not stats.passed(cosine_min, below_min):
        raise NumericError(
            "Synthetic corpus fails the statistics check: feature cosine "
            "mean %.4f (min %.2f), text BLEU below %.2f for %.1f%% of "
            "pairs (min %.1f%%)!"
            % (stats.feature_cosine_mean, cosine_min, stats.threshold,
               100.0 * stats.bleu_below, 100.0 * below_min))
    save_dataset(samples, out)
    logger.info("wrote {} samples to {}", n, out)
    return stats
