##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides cosine similarities, pairwise similarity matrices
# and the softmax-normalized topology vectors of an anchor against a
# group reference. Latent representations are flattened to one vector
# before any cosine is taken.
#
##########################################################################

import csv
import io
import typing
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .errors import InvalidInput, ShapeError, ZeroNormError
from .model import LatentRep
from .numcore import Matrix
from .textmetric import TokenSequence, bleu, symmetric_bleu

SOURCE = "source"
TARGET = "target"

SPREAD_BINS = 40


def _vector(value) -> np.ndarray:
    if isinstance(value, LatentRep):
        return value.vector()
    if isinstance(value, Matrix):
        return value.data.reshape(-1)
    return np.asarray(value, dtype=nc.DTYPE).reshape(-1)


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    Args:
        u: LatentRep, Matrix or array. Matrices are flattened.
        v: Same as u.

    Returns:
        float: u.v / (|u| |v|)
    """
    u, v = _vector(u), _vector(v)
    if u.shape != v.shape:
        raise ShapeError("Vectors of length %d and %d differ!"
                         % (u.size, v.size))
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0:
        raise ZeroNormError("Cosine of a zero vector!", index=0)
    if nv == 0:
        raise ZeroNormError("Cosine of a zero vector!", index=1)
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _unit_rows(reps) -> np.ndarray:
    rows = np.vstack([_vector(r) for r in reps])
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroNormError("Representation %d has zero norm!" % zero[0],
                            index=int(zero[0]))
    return rows / norms[:, None]


def pairwise_cosine_matrix(reps: typing.Sequence) -> Matrix:
    """Symmetric matrix of cosine similarities with unit diagonal."""
    if len(reps) < 2:
        raise InvalidInput("Pairwise cosine needs at least two "
                           "representations!")
    unit = _unit_rows(reps)
    sims = unit @ unit.T
    sims = np.clip(0.5 * (sims + sims.T), -1.0, 1.0)
    np.fill_diagonal(sims, 1.0)
    return Matrix(sims)


def cosine_profile(z, refs: typing.Sequence) -> Matrix:
    """Differentiable 1 x n row of cosines between z and n constant
    reference vectors. Gradients flow into z only."""
    z = nc.as_matrix(z)
    if z.rows != 1:
        z = z.flatten()
    if not len(refs):
        raise InvalidInput("Empty group reference!")
    unit = _unit_rows(refs)
    if unit.shape[1] != z.cols:
        raise ShapeError("Reference vectors have length %d, expected %d!"
                         % (unit.shape[1], z.cols))
    if not np.any(z.data):
        raise ZeroNormError("Anchor representation has zero norm!")
    dots = nc.matmul(z, unit.T)
    return nc.clip(nc.div(dots, nc.norm(z)), -1.0, 1.0)


def bleu_profile(anchor, group: typing.Sequence, max_n: int = 2,
                 smoothing: bool = True,
                 symmetric: bool = False) -> np.ndarray:
    """BLEU of the anchor text (hypothesis) against every group text."""
    score = symmetric_bleu if symmetric else bleu
    return np.array([score(anchor, t, max_n, smoothing) for t in group])


##########################################################################
# Topology vectors


@dataclass
class TopologyVector:
    """Softmax-normalized similarity profile of an anchor."""

    probabilities: np.ndarray
    modality: str

    def __len__(self):
        return len(self.probabilities)


def topology_vector(anchor, group: typing.Sequence, temperature: float = 1.0,
                    max_n: int = 2, smoothing: bool = True,
                    symmetric: bool = False) -> TopologyVector:
    """Topology vector of an anchor against a group of the same modality.

    Latent anchors use cosine similarities, text anchors (TokenSequence or
    raw string) use BLEU with the anchor as hypothesis.

    Args:
        anchor: LatentRep or text.
        group: Non-empty list of the same modality, not containing anchor.
        temperature: Softmax temperature.
        max_n: BLEU order of text profiles.
        smoothing: BLEU smoothing of text profiles.
        symmetric: Average BLEU over both argument orders.

    Returns:
        TopologyVector: Probabilities of length len(group).
    """
    if not len(group):
        raise InvalidInput("Empty group reference!")
    if any(g is anchor for g in group):
        raise InvalidInput("Anchor must not be part of its group!")
    if isinstance(anchor, (TokenSequence, str)):
        sims = bleu_profile(anchor, group, max_n, smoothing, symmetric)
        modality = TARGET
    else:
        sims = np.array([cosine(anchor, g) for g in group])
        modality = SOURCE
    probs = nc.softmax(Matrix(sims / temperature)).data.reshape(-1)
    return TopologyVector(probs, modality)


##########################################################################
# Similarity spread


@dataclass
class SpreadStats:
    """Statistics of the strictly off-diagonal entries of a similarity
    matrix."""

    mean: float
    std: float
    min: float
    max: float
    histogram: typing.List[int] = field(default_factory=list)
    edges: typing.List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "histogram": list(self.histogram),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpreadStats":
        counts = list(data.get("histogram", []))
        edges = list(np.linspace(-1.0, 1.0, len(counts) + 1)) if counts \
            else []
        return cls(data["mean"], data["std"], data["min"], data["max"],
                   counts, edges)


def off_diagonal(matrix) -> np.ndarray:
    data = nc.as_matrix(matrix).data
    if data.shape[0] != data.shape[1]:
        raise ShapeError("Similarity matrix must be square!")
    return data[~np.eye(data.shape[0], dtype=bool)]


def similarity_spread_stats(matrix, bins: int = SPREAD_BINS) -> SpreadStats:
    """Mean, population std, range and a histogram with uniform bins over
    [-1, 1] of the off-diagonal entries."""
    data = nc.as_matrix(matrix)
    if data.rows < 2 or data.cols < 2:
        raise InvalidInput("Spread statistics need at least a 2 x 2 matrix!")
    values = off_diagonal(data)
    counts, edges = np.histogram(np.clip(values, -1.0, 1.0), bins=bins,
                                 range=(-1.0, 1.0))
    return SpreadStats(
        mean=float(values.mean()),
        std=float(values.std()),
        min=float(values.min()),
        max=float(values.max()),
        histogram=[int(c) for c in counts],
        edges=[float(e) for e in edges],
    )


def histogram_csv(stats: SpreadStats) -> str:
    """Export a spread histogram as CSV with the columns bin_left,
    bin_right and count."""
    fp = io.StringIO()
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(("bin_left", "bin_right", "count"))
    edges = stats.edges or list(np.linspace(-1.0, 1.0,
                                            len(stats.histogram) + 1))
    for i, count in enumerate(stats.histogram):
        writer.writerow(("%.4f" % edges[i], "%.4f" % edges[i + 1], count))
    return fp.getvalue()


def pearson(x, y) -> float:
    """Pearson correlation of two equally long vectors. Returns 0.0 if
    one of them is constant."""
    x, y = _vector(x), _vector(y)
    if x.shape != y.shape:
        raise ShapeError("Vectors of length %d and %d differ!"
                         % (x.size, y.size))
    if x.size < 2:
        raise InvalidInput("Correlation needs at least two values!")
    dx, dy = x - x.mean(), y - y.mean()
    denom = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if denom == 0:
        return 0.0
    return float(np.clip(np.sum(dx * dy) / denom, -1.0, 1.0))
