##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the paired samples of the translation task: the
# synthetic corpus generator, dataset file I/O, tag sets and tempo
# normalization, fold splitting, the tag based baselines and the lexicon
# sentiment proxy.
#
# Dataset files contain one JSON object per line:
#
#     {"id": "s0000", "features": [[...], ...], "text": "...",
#      "tags": {"mode": "major", "instrument": "piano",
#               "tempo": "fast", "ensemble": "trio"},
#      "sentiment": "joy", "title": "Allegro con brio"}
#
# The fields "sentiment" and "title" are optional. A missing sentiment is
# derived from the text.
#
##########################################################################

import json
import typing
from dataclasses import dataclass

import numpy as np
from loguru import logger

from . import jsonschema
from .errors import DuplicateError, InvalidInput, IoError, ParseError
from .model import SENTIMENT_CLASSES, segment_bounds
from .simkernel import off_diagonal, pairwise_cosine_matrix
from .textmetric import BleuTable, pairwise_bleu_matrix, split_words

MODES = ("major", "minor")
INSTRUMENTS = ("string", "wind", "piano")
TEMPOS = ("slow", "medium", "fast", "super_fast")
ENSEMBLES = ("sonate", "trio", "quartet", "quintet_or_more")

TEMPO_MARKINGS = {
    "grave": "slow",
    "largo": "slow",
    "lento": "slow",
    "adagio": "slow",
    "andante": "medium",
    "moderato": "medium",
    "andantino": "medium",
    "allegro": "fast",
    "allegretto": "fast",
    "vivace": "fast",
    "presto": "super_fast",
    "prestissimo": "super_fast",
}

SENTIMENT_LEXICON = {
    "anger": ("furious", "angry", "violent", "fierce", "raging", "wrathful",
              "stormy"),
    "disgust": ("grotesque", "sour", "bitter", "repugnant", "crude"),
    "fear": ("dread", "ominous", "anxious", "fearful", "trembling",
             "menacing", "eerie"),
    "joy": ("bright", "lively", "sweetly", "joyous", "cheerful", "playful",
            "radiant", "peaceful", "beautiful", "jubilant", "sunny", "happy",
            "gleeful"),
    "neutral": (),
    "sadness": ("sadness", "loss", "lament", "mournful", "grieving",
                "melancholy", "sorrowful", "tearful", "weeping"),
    "surprise": ("sudden", "startling", "unexpected", "astonishing",
                 "abrupt", "surprising"),
}

_KEYWORDS = {word: label for label, words in SENTIMENT_LEXICON.items()
             for word in words}


##########################################################################
# Sample types


@dataclass(frozen=True)
class TagSet:
    """Categorical music tags of one sample."""

    mode: str
    instrument: str
    tempo: str
    ensemble: str

    def __post_init__(self):
        for name, values in (("mode", MODES), ("instrument", INSTRUMENTS),
                             ("tempo", TEMPOS), ("ensemble", ENSEMBLES)):
            if getattr(self, name) not in values:
                raise InvalidInput("Invalid %s tag '%s'!"
                                   % (name, getattr(self, name)))

    def key(self) -> tuple:
        return (self.mode, self.instrument, self.tempo, self.ensemble)

    def overlap(self, other: "TagSet") -> int:
        """Number of equal tag fields."""
        return sum(a == b for a, b in zip(self.key(), other.key()))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "instrument": self.instrument,
                "tempo": self.tempo, "ensemble": self.ensemble}

    @classmethod
    def from_dict(cls, data: dict) -> "TagSet":
        try:
            return cls(data["mode"], data["instrument"], data["tempo"],
                       data["ensemble"])
        except KeyError as error:
            raise InvalidInput("Missing tag category %s!" % error)


@dataclass
class PairedSample:
    """One source feature matrix with its describing text."""

    id: str
    features: np.ndarray
    text: str
    tags: TagSet
    sentiment: np.ndarray = None
    title: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or not self.features.size:
            raise InvalidInput("Sample %s has no feature matrix!" % self.id)
        if not self.text.strip():
            raise InvalidInput("Sample %s has a blank text!" % self.id)
        if self.sentiment is None:
            self.sentiment = lexicon_sentiment(self.text)
        self.sentiment = np.asarray(self.sentiment, dtype=np.float64)

    @property
    def frames(self) -> int:
        return self.features.shape[1]

    @property
    def sentiment_label(self) -> str:
        return SENTIMENT_CLASSES[int(np.argmax(self.sentiment))]

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "features": self.features.tolist(),
            "text": self.text,
            "tags": self.tags.to_dict(),
            "sentiment": self.sentiment_label,
        }
        if self.title:
            record["title"] = self.title
        return record

    @classmethod
    def from_record(cls, record: dict) -> "PairedSample":
        sentiment = record.get("sentiment")
        if sentiment is not None:
            sentiment = one_hot(sentiment)
        return cls(record["id"], record["features"], record["text"],
                   TagSet.from_dict(record["tags"]), sentiment,
                   record.get("title", ""))


@dataclass
class FoldSplit:
    index: int
    train_ids: typing.List[str]
    test_ids: typing.List[str]

    def check_disjoint(self):
        """Raise InvalidInput if a test id leaks into the train set."""
        leaked = set(self.train_ids) & set(self.test_ids)
        if leaked:
            raise InvalidInput("Fold %d: test ids %s are in the train set!"
                               % (self.index, sorted(leaked)[:5]))


##########################################################################
# Sentiment and tempo


def one_hot(label: str) -> np.ndarray:
    if label not in SENTIMENT_CLASSES:
        raise InvalidInput("Unknown sentiment class '%s'!" % label)
    vec = np.zeros(len(SENTIMENT_CLASSES))
    vec[SENTIMENT_CLASSES.index(label)] = 1.0
    return vec


def lexicon_sentiment(text: str) -> np.ndarray:
    """One-hot 7-class sentiment of a text by keyword vote.

    The class with most distinct matched keywords wins, ties go to the
    class with more total hits, then to the fixed class order. Texts
    without any keyword are neutral.
    """
    types = {label: set() for label in SENTIMENT_CLASSES}
    hits = dict.fromkeys(SENTIMENT_CLASSES, 0)
    for word in split_words(text):
        label = _KEYWORDS.get(word)
        if label:
            types[label].add(word)
            hits[label] += 1
    if not any(hits.values()):
        return one_hot("neutral")
    best = max(SENTIMENT_CLASSES,
               key=lambda c: (len(types[c]), hits[c],
                              -SENTIMENT_CLASSES.index(c)))
    return one_hot(best)


def sentiment_distribution(samples: typing.Sequence) -> np.ndarray:
    """Mean sentiment vector of samples or of plain 7-class vectors."""
    if not len(samples):
        return np.zeros(len(SENTIMENT_CLASSES))
    vectors = [s.sentiment if isinstance(s, PairedSample) else
               np.asarray(s, dtype=np.float64).reshape(-1) for s in samples]
    return np.mean(vectors, axis=0)


def tempo_category(title: str) -> typing.Optional[str]:
    """Tempo tag of a movement title, e.g. "Rondo: Allegro" -> "fast".
    The first marking in title order wins."""
    for word in split_words(title):
        if word in TEMPO_MARKINGS:
            return TEMPO_MARKINGS[word]
    return None


##########################################################################
# Synthetic corpus

_MARKINGS = {tempo: [m for m, t in TEMPO_MARKINGS.items() if t == tempo]
             for tempo in TEMPOS}
_QUALIFIERS = ("molto", "ma non troppo", "cantabile", "con brio", "assai",
               "sostenuto", "espressivo", "giocoso", "maestoso", "con moto")
_INSTRUMENT_WORDS = {
    "string": ("violin", "viola", "cello", "strings", "violins",
               "double bass", "second violin"),
    "wind": ("flute", "oboe", "clarinet", "bassoon", "horn", "winds",
             "woodwinds"),
    "piano": ("piano", "keyboard", "pianist", "right hand", "left hand",
              "fortepiano"),
}
_ENSEMBLE_WORDS = {
    "sonate": ("sonata", "duo sonata", "duo"),
    "trio": ("trio", "piano trio", "string trio"),
    "quartet": ("quartet", "string quartet"),
    "quintet_or_more": ("quintet", "sextet", "octet", "septet"),
}
_NOUNS = ("theme", "melody", "motif", "figure", "subject", "idea", "phrase",
          "line", "passage", "episode", "refrain", "chorale", "cadence",
          "canon", "fugato", "dialogue", "countermelody", "ostinato",
          "arpeggio", "trill", "scale", "dance", "march", "waltz", "minuet",
          "scherzo", "rondo", "song", "hymn", "fanfare", "pulse", "drone")
_VERBS = ("rises", "returns", "unfolds", "drifts", "wanders", "climbs",
          "descends", "fades", "grows", "dissolves", "echoes", "answers",
          "recalls", "turns", "sings", "pauses", "swells", "lingers",
          "circles", "settles", "presses", "glides")
_ADJECTIVES = ("broad", "airy", "compact", "spacious", "flowing", "dotted",
               "syncopated", "chromatic", "modal", "ornate", "simple",
               "stately", "rustic", "hushed", "distant", "muted", "sparse",
               "dense", "rocking", "swaying", "pulsing", "luminous",
               "halting", "veiled")
_ADVERBS = ("gently", "slowly", "boldly", "quietly", "softly", "briskly",
            "tenderly", "firmly", "freely", "lightly", "steadily", "warmly",
            "plainly", "evenly")
_PREPOSITIONS = ("over", "under", "against", "through", "toward", "beneath",
                 "across", "around", "beside", "within")
_PLACES = ("a drone", "the bass", "pizzicato chords", "the coda",
           "the development", "the recapitulation", "the reprise",
           "the middle section", "a pedal", "the cadence", "new keys",
           "the trio section", "distant keys", "the opening bars",
           "a tremolo")
_KEY_LETTERS = ("c", "d", "e", "f", "g", "a", "b")
_ACCIDENTALS = ("", "", "flat ", "sharp ")

_OPENINGS = (
    "the movement , {marking} , begins with a {adj} {noun} in the {inst} .",
    "{marking} : a {adj} {noun} for {inst} opens this {ens} in {key} .",
    "opening {adv} , the {inst} {verb} {obj} at a {marking} pace .",
    "this {ens} starts {marking} , its {noun} {verb} {adv} .",
    "in {key} , a {marking} {noun} {verb} {obj} .",
    "we first hear {inst} , {marking} and {adv} {adj} .",
    "a {adj} {noun} {verb} {obj} , carried by {inst} in {key} .",
    "from its first bar this {marking} {ens} {verb} {adv} .",
    "{inst} lead the {ens} through a {adj} {marking} opening .",
    "set in {key} , the {marking} unfolds as a {adj} {noun} .",
    "here the composer writes {marking} for {inst} and {inst2} .",
    "{key} is home to this {adj} {marking} , scored for {ens} .",
    "our {ens} takes up a {noun} , {marking} , {adv} shaped by {inst} .",
    "marked {marking} , the piece gives {inst} a {adj} {noun} .",
    "after a {adj} upbeat , {inst} announce the {marking} {noun} .",
    "the {ens} moves {marking} from the start , {noun} against {noun2} .",
    "{marking} throughout , this music for {inst} stays in {key} .",
    "with {inst} to the fore , a {noun} in {key} {verb} {adv} .",
    "{adj} and {adj2} , the {marking} {noun} belongs to {inst} .",
    "listen as {inst} shape a {marking} {noun} {obj} .",
    "one {noun} , {marking} , drives the whole {ens} {obj} .",
    "under a {marking} heading the {ens} offers {adj} {noun} .",
    "it is a {marking} {noun} for {ens} , tinged by {key} .",
    "{inst} open {adv} , {marking} , before the {ens} joins .",
)
_MIDDLES = (
    "the {noun} {verb} {obj} .",
    "later a {adj} {noun} {verb} {adv} .",
    "{obj} , {inst} {verb} .",
    "then comes a {noun} , {adj} yet {adj2} .",
    "a second {noun} {verb} {obj} .",
    "{noun} and {noun2} alternate {obj} .",
    "the {inst} answer with {adj} {noun} .",
    "soon the {noun} {verb} , {adv} .",
    "between sections a {noun} {verb} .",
    "every {noun} {verb} {adv} {obj} .",
    "some {adj} {noun} passages {verb} {obj} .",
    "the texture grows {adj} as the {noun} {verb} .",
    "{adv} , the harmony shifts {obj} .",
    "its {noun} recalls a {adj} {noun2} .",
    "near the end the {noun} {verb} {obj} .",
    "a {noun} in {key} {verb} {adv} .",
)
_MOODS = (
    "the character is {kw} .",
    "everything feels {kw} and {kw2} .",
    "a {kw} {noun} dominates .",
    "its tone turns {kw} {obj} .",
    "{kw} moments {verb} {adv} .",
    "overall the mood stays {kw} .",
    "the {inst} sound {kw} here .",
    "there is something {kw} about the {noun} .",
    "{kw} , even {kw2} , it {verb} .",
    "the close is {kw} .",
)

# Mood prior, skewed towards joy
_MOOD_WEIGHTS = {
    "anger": 0.05,
    "disgust": 0.04,
    "fear": 0.08,
    "joy": 0.45,
    "neutral": 0.20,
    "sadness": 0.12,
    "surprise": 0.06,
}


@dataclass
class _Attributes:
    mode: str
    instrument: str
    tempo: str
    ensemble: str
    mood: str
    marking: str
    key: str


def _choice(rng: np.random.Generator, items: typing.Sequence):
    return items[int(rng.integers(len(items)))]


def _draw_attributes(rng: np.random.Generator) -> _Attributes:
    mode = _choice(rng, MODES)
    tempo = _choice(rng, TEMPOS)
    marking = _choice(rng, _MARKINGS[tempo])
    if rng.random() < 0.5:
        marking += " " + _choice(rng, _QUALIFIERS)
    key = "%s %s%s" % (_choice(rng, _KEY_LETTERS), _choice(rng, _ACCIDENTALS),
                       mode)
    moods = list(_MOOD_WEIGHTS)
    mood = moods[int(rng.choice(len(moods), p=list(_MOOD_WEIGHTS.values())))]
    return _Attributes(mode, _choice(rng, INSTRUMENTS), tempo,
                       _choice(rng, ENSEMBLES), mood, marking, key)


def _fill(template: str, rng: np.random.Generator, a: _Attributes) -> str:
    keywords = SENTIMENT_LEXICON[a.mood] or ("calm",)
    slots = {
        "marking": a.marking,
        "key": a.key,
        "inst": _choice(rng, _INSTRUMENT_WORDS[a.instrument]),
        "inst2": _choice(rng, _INSTRUMENT_WORDS[a.instrument]),
        "ens": _choice(rng, _ENSEMBLE_WORDS[a.ensemble]),
        "noun": _choice(rng, _NOUNS),
        "noun2": _choice(rng, _NOUNS),
        "verb": _choice(rng, _VERBS),
        "adj": _choice(rng, _ADJECTIVES),
        "adj2": _choice(rng, _ADJECTIVES),
        "adv": _choice(rng, _ADVERBS),
        "obj": "%s %s" % (_choice(rng, _PREPOSITIONS),
                          _choice(rng, _PLACES)),
        "kw": _choice(rng, keywords),
        "kw2": _choice(rng, keywords),
    }
    return template.format(**slots)


def _compose_text(rng: np.random.Generator, a: _Attributes) -> str:
    clauses = [_fill(_choice(rng, _OPENINGS), rng, a)]
    for _ in range(int(rng.integers(1, 3))):
        clauses.append(_fill(_choice(rng, _MIDDLES), rng, a))
    if a.mood != "neutral":
        clauses.insert(int(rng.integers(1, len(clauses) + 1)),
                       _fill(_choice(rng, _MOODS), rng, a))
    return " ".join(clauses)


def _compose_features(rng: np.random.Generator, a: _Attributes,
                      bins: int) -> np.ndarray:
    """Shared rank-1 base plus small perturbations tied to the attributes
    plus Gaussian noise."""
    frames = int(rng.integers(24, 49))
    f = np.linspace(0.0, 1.0, bins)
    t = np.linspace(0.0, 1.0, frames)
    profile = 1.0 + 0.5 * np.exp(-((f - 0.3) / 0.2) ** 2)
    envelope = 1.0 + 0.2 * np.sin(2.0 * np.pi * t)
    m = np.outer(profile, envelope)

    rate = (1.0, 2.0, 3.0, 5.0)[TEMPOS.index(a.tempo)]
    m += np.outer(profile, 0.06 * np.sin(2.0 * np.pi * rate * t))
    center = (0.2, 0.5, 0.8)[INSTRUMENTS.index(a.instrument)]
    m += np.outer(0.08 * np.exp(-((f - center) / 0.08) ** 2), np.ones(frames))
    tilt = 1.0 if a.mode == "major" else -1.0
    m += np.outer(0.05 * tilt * (f - 0.5), np.ones(frames))
    m += np.outer(0.05 * f ** (1 + ENSEMBLES.index(a.ensemble)),
                  np.ones(frames))
    mood = (SENTIMENT_CLASSES.index(a.mood) - 3) / 3.0
    m += np.outer(np.ones(bins), 0.04 * mood * (t - 0.5))
    return m + rng.normal(0.0, 0.01, m.shape)


def synth_generate(n: int = 200, seed: int = 0,
                   bins: int = 32) -> typing.List[PairedSample]:
    """Generate a synthetic paired corpus.

    All feature matrices share one dominant positive base, so their
    pooled cosine similarities are close to 1, while the texts come from
    a varied grammar and rarely share longer n-grams. Tags, texts and
    feature perturbations are all driven by the same latent attributes.
    Every sample is drawn from its own seed derived from the corpus seed.

    Args:
        n: Number of samples, at least 10.
        seed: Corpus seed.
        bins: Number of frequency bins F.

    Returns:
        list: PairedSample objects with ids s0000, s0001, ...
    """
    if n < 10:
        raise InvalidInput("Synthetic corpus needs at least 10 samples, "
                           "got %d!" % n)
    if bins < 1:
        raise InvalidInput("Number of bins must be positive!")
    samples = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        rng = np.random.default_rng(child)
        a = _draw_attributes(rng)
        text = _compose_text(rng, a)
        features = _compose_features(rng, a, bins)
        title = a.marking.capitalize()
        tags = TagSet(a.mode, a.instrument, tempo_category(title), a.ensemble)
        samples.append(PairedSample("s%04d" % i, features, text, tags,
                                    lexicon_sentiment(text), title))
    logger.debug("generated {} synthetic samples with seed {}", n, seed)
    return samples


##########################################################################
# Corpus statistics


def feature_summary(features, segments: int = 4) -> np.ndarray:
    """Flattened F x S segment means of a feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    bounds = segment_bounds(features.shape[1], segments)
    return np.stack([features[:, a:b].mean(axis=1) for a, b in bounds],
                    axis=1).reshape(-1)


@dataclass
class CorpusStats:
    feature_cosine_mean: float
    feature_cosine_min: float
    bleu_mean: float
    bleu_below: float
    threshold: float = 0.06
    pairs: int = 0

    def passed(self, cosine_min: float = 0.95,
               below_min: float = 0.9) -> bool:
        return self.feature_cosine_mean >= cosine_min and \
            self.bleu_below >= below_min

    def __str__(self):
        return "\n".join([
            "Pairs:                 %d" % self.pairs,
            "Feature cosine mean:   %.4f" % self.feature_cosine_mean,
            "Feature cosine min:    %.4f" % self.feature_cosine_min,
            "Text BLEU mean:        %.4f" % self.bleu_mean,
            "Text BLEU < %.2f:      %.1f%%" % (self.threshold,
                                               100.0 * self.bleu_below),
        ])


def corpus_statistics(samples: typing.Sequence[PairedSample],
                      segments: int = 4, max_n: int = 4,
                      threshold: float = 0.06) -> CorpusStats:
    """Pairwise feature cosine and text BLEU statistics of a corpus."""
    if len(samples) < 2:
        raise InvalidInput("Corpus statistics need at least two samples!")
    cos = off_diagonal(pairwise_cosine_matrix(
        [feature_summary(s.features, segments) for s in samples]))
    sims = off_diagonal(pairwise_bleu_matrix([s.text for s in samples],
                                             max_n=max_n))
    return CorpusStats(
        feature_cosine_mean=float(cos.mean()),
        feature_cosine_min=float(cos.min()),
        bleu_mean=float(sims.mean()),
        bleu_below=float(np.mean(sims < threshold)),
        threshold=threshold,
        pairs=int(sims.size),
    )


##########################################################################
# Dataset files


def _open_error(path: str, error: OSError) -> IoError:
    return IoError("Cannot access dataset file '%s': %s!"
                   % (path, error.strerror or error))


def load_dataset(path: str) -> typing.List[PairedSample]:
    """Read and validate a dataset file.

    Raises:
        ParseError: A record is malformed. The error carries its line.
        DuplicateError: An id occurs twice.
    """
    try:
        with open(path, "r", encoding="utf-8") as fp:
            lines = fp.read().split("\n")
    except OSError as error:
        raise _open_error(path, error)

    samples = []
    seen = set()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as error:
            raise ParseError("Line %d: %s!" % (number, error.msg),
                             line=number)
        try:
            jsonschema.validate(record, "dataset")
            sample = PairedSample.from_record(record)
        except (jsonschema.ValidationError, InvalidInput, ValueError) as error:
            message = getattr(error, "message", None) or str(error)
            raise ParseError("Line %d: %s" % (number, message), line=number)
        if sample.id in seen:
            raise DuplicateError("Duplicate sample id '%s' in line %d!"
                                 % (sample.id, number))
        seen.add(sample.id)
        samples.append(sample)
    logger.debug("loaded {} samples from {}", len(samples), path)
    return samples


def dumps_dataset(samples: typing.Sequence[PairedSample]) -> str:
    """Serialize samples to the line-per-record dataset format."""
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise DuplicateError("Sample ids are not unique!")
    return "".join(json.dumps(s.to_record(), separators=(",", ":")) + "\n"
                   for s in samples)


def save_dataset(samples: typing.Sequence[PairedSample], path: str):
    text = dumps_dataset(samples)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(text)
    except OSError as error:
        raise _open_error(path, error)
    logger.debug("saved {} samples to {}", len(samples), path)


##########################################################################
# Folds and tag baselines


def kfold_split(ids: typing.Sequence[str], folds: int = 5,
                seed: int = 0) -> typing.List[FoldSplit]:
    """Shuffle ids by seed and partition them into near-equal test folds.
    The first len(ids) % folds folds get one extra id."""
    if folds < 1:
        raise InvalidInput("Number of folds must be positive!")
    if len(ids) < folds:
        raise InvalidInput("Cannot split %d ids into %d folds!"
                           % (len(ids), folds))
    ids = list(ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    base, extra = divmod(len(ids), folds)
    splits = []
    start = 0
    for index in range(folds):
        stop = start + base + (1 if index < extra else 0)
        test = set(order[start:stop].tolist())
        splits.append(FoldSplit(
            index,
            [ids[i] for i in range(len(ids)) if i not in test],
            [ids[i] for i in order[start:stop]],
        ))
        start = stop
    return splits


def tags_knn(query: TagSet, corpus: typing.Sequence[PairedSample]) -> str:
    """Text of the sample with most tag fields equal to the query. Ties go
    to the lowest id."""
    if not len(corpus):
        raise InvalidInput("Tags kNN needs a non-empty corpus!")
    best = min(corpus, key=lambda s: (-query.overlap(s.tags), s.id))
    return best.text


def tags_representative(corpus: typing.Sequence[PairedSample],
                        max_n: int = 4,
                        smoothing: bool = True) -> typing.Dict[TagSet, str]:
    """Representative text of every tag combination.

    Within a group of equal tags the text with the highest mean BLEU
    against the other members wins, ties go to the lowest id.
    """
    groups = {}
    for sample in sorted(corpus, key=lambda s: s.id):
        groups.setdefault(sample.tags, []).append(sample)
    table = {}
    for tags, members in groups.items():
        if len(members) == 1:
            table[tags] = members[0].text
            continue
        bleu = BleuTable([m.text for m in members], max_n, smoothing)
        n = len(members)
        scores = [sum(bleu.score(i, j) for j in range(n) if j != i) / (n - 1)
                  for i in range(n)]
        table[tags] = members[int(np.argmax(scores))].text
    return table


def lookup_representative(query: TagSet,
                          table: typing.Dict[TagSet, str]) -> str:
    """Representative text of the query tags. Unseen combinations fall
    back to the combination with most equal fields."""
    if not table:
        raise InvalidInput("Empty representative table!")
    if query in table:
        return table[query]
    best = min(table, key=lambda t: (-query.overlap(t), t.key()))
    return table[best]
