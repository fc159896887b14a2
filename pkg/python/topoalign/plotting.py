##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module renders the result figures as self-contained SVG text:
#
# similarity_scatter:   text BLEU (x) vs. latent cosine (y) per pair
# similarity_histogram: latent cosine histograms before/after training
# sentiment_bars:       reference vs. generated sentiment distributions
# sweep_curve:          mean corpus BLEU over a swept parameter
#
# Output depends on the input data only, so equal inputs give equal
# bytes.
#
##########################################################################

import typing

import numpy as np

from .errors import InvalidConfig
from .model import SENTIMENT_CLASSES
from .simkernel import SpreadStats, pearson

PLOT_KINDS = (
    "similarity_scatter",
    "similarity_histogram",
    "sentiment_bars",
    "sweep_curve",
)

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e")

WIDTH = 640
HEIGHT = 420
MARGIN_LEFT = 70
MARGIN_RIGHT = 30
MARGIN_TOP = 50
MARGIN_BOTTOM = 60


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


class SvgChart:
    """Single chart with linear axes."""

    def __init__(self, title: str, xlim: tuple, ylim: tuple,
                 xlabel: str = "", ylabel: str = ""):
        self.xlim = xlim
        self.ylim = ylim
        self.commands = []
        self.legend_items = []
        self.left = MARGIN_LEFT
        self.right = WIDTH - MARGIN_RIGHT
        self.top = MARGIN_TOP
        self.bottom = HEIGHT - MARGIN_BOTTOM
        self.text(WIDTH / 2, 28, title, size=16, anchor="middle")
        self._axes(xlabel, ylabel)

    def x(self, value: float) -> float:
        x0, x1 = self.xlim
        return self.left + (value - x0) / (x1 - x0) * (self.right - self.left)

    def y(self, value: float) -> float:
        y0, y1 = self.ylim
        span = self.bottom - self.top
        return self.bottom - (value - y0) / (y1 - y0) * span

    def _axes(self, xlabel: str, ylabel: str):
        self.commands.append(
            '<polyline points="%.2f,%.2f %.2f,%.2f %.2f,%.2f" '
            'style="fill:none;stroke:#000000;stroke-width:1"/>'
            % (self.left, self.top, self.left, self.bottom, self.right,
               self.bottom))
        for value in np.linspace(*self.xlim, 5):
            px = self.x(value)
            self.commands.append(
                '<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" '
                'stroke="#000000"/>' % (px, self.bottom, px, self.bottom + 5))
            self.text(px, self.bottom + 20, "%.2f" % value, anchor="middle")
        for value in np.linspace(*self.ylim, 5):
            py = self.y(value)
            self.commands.append(
                '<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" '
                'stroke="#000000"/>' % (self.left - 5, py, self.left, py))
            self.text(self.left - 8, py + 4, "%.2f" % value, anchor="end")
        self.text((self.left + self.right) / 2, HEIGHT - 15, xlabel,
                  anchor="middle")
        self.commands.append(
            '<text x="18" y="%.2f" font-size="12" font-family="sans-serif" '
            'text-anchor="middle" transform="rotate(-90 18 %.2f)">%s</text>'
            % ((self.top + self.bottom) / 2, (self.top + self.bottom) / 2,
               _escape(ylabel)))

    def text(self, x: float, y: float, text: str, size: int = 12,
             anchor: str = "start", color: str = "#000000"):
        self.commands.append(
            '<text x="%.2f" y="%.2f" font-size="%d" font-family="sans-serif" '
            'text-anchor="%s" fill="%s">%s</text>'
            % (x, y, size, anchor, color, _escape(text)))

    def points(self, xs, ys, color: str = COLORS[0], radius: float = 2.5):
        for x, y in zip(xs, ys):
            self.commands.append(
                '<circle cx="%.2f" cy="%.2f" r="%.2f" fill="%s" '
                'fill-opacity="0.6"/>' % (self.x(x), self.y(y), radius, color))

    def bar(self, x0: float, x1: float, height: float, color: str):
        top = self.y(height)
        self.commands.append(
            '<rect x="%.2f" y="%.2f" width="%.2f" height="%.2f" fill="%s" '
            'fill-opacity="0.7"/>'
            % (self.x(x0), top, self.x(x1) - self.x(x0),
               self.y(self.ylim[0]) - top, color))

    def polyline(self, xs, ys, color: str = COLORS[0]):
        points = " ".join("%.2f,%.2f" % (self.x(x), self.y(y))
                          for x, y in zip(xs, ys))
        self.commands.append(
            '<polyline points="%s" style="fill:none;stroke:%s;'
            'stroke-width:2"/>' % (points, color))

    def errorbar(self, x: float, low: float, high: float,
                 color: str = COLORS[0]):
        self.commands.append(
            '<line x1="%.2f" y1="%.2f" x2="%.2f" y2="%.2f" stroke="%s"/>'
            % (self.x(x), self.y(low), self.x(x), self.y(high), color))

    def legend(self, label: str, color: str):
        self.legend_items.append((label, color))

    def no_data(self):
        self.text((self.left + self.right) / 2, (self.top + self.bottom) / 2,
                  "no data", size=14, anchor="middle", color="#666666")

    def render(self) -> str:
        lines = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" '
                 'height="%d" viewBox="0 0 %d %d">'
                 % (WIDTH, HEIGHT, WIDTH, HEIGHT),
                 '<rect x="0" y="0" width="100%" height="100%" '
                 'fill="#ffffff"/>']
        lines.extend(self.commands)
        for i, (label, color) in enumerate(self.legend_items):
            y = self.top + 10 + 18 * i
            lines.append('<rect x="%.2f" y="%.2f" width="12" height="12" '
                         'fill="%s"/>' % (self.right - 170, y - 10, color))
            lines.append('<text x="%.2f" y="%.2f" font-size="12" '
                         'font-family="sans-serif">%s</text>'
                         % (self.right - 152, y, _escape(label)))
        lines.append("</svg>")
        return "\n".join(lines) + "\n"


##########################################################################
# Figures


def similarity_scatter(pairs: typing.Sequence, title: str = None) -> str:
    """Scatter plot of (text BLEU, latent cosine) pairs."""
    chart = SvgChart(title or "Text vs. latent similarity", (0.0, 1.0),
                     (-1.0, 1.0), "text BLEU", "latent cosine")
    if not len(pairs):
        chart.no_data()
    else:
        pairs = np.asarray(pairs, dtype=float)
        chart.points(np.clip(pairs[:, 0], 0.0, 1.0),
                     np.clip(pairs[:, 1], -1.0, 1.0))
    return chart.render()


def similarity_histogram(after: SpreadStats = None,
                         before: SpreadStats = None) -> str:
    """Histograms of latent cosine similarities before and after joint
    training."""
    stats = [(label, s, color) for label, s, color in
             (("pre-trained", before, COLORS[1]),
              ("joint", after, COLORS[0])) if s is not None]
    peak = max([max(s.histogram, default=0) for _, s, _ in stats] or [0])
    chart = SvgChart("Latent similarity histogram", (-1.0, 1.0),
                     (0.0, float(max(peak, 1))), "cosine", "pairs")
    if not peak:
        chart.no_data()
        return chart.render()
    for label, s, color in stats:
        edges = np.linspace(-1.0, 1.0, len(s.histogram) + 1)
        for i, count in enumerate(s.histogram):
            if count:
                chart.bar(edges[i], edges[i + 1], count, color)
        chart.legend("%s (std %.3f)" % (label, s.std), color)
    return chart.render()


def sentiment_bars(reference, generated, r: float = None) -> str:
    """Grouped bars of the reference and generated sentiment
    distributions. The legend shows their Pearson correlation."""
    n = len(SENTIMENT_CLASSES)
    chart = SvgChart("Sentiment distribution", (0.0, float(n)), (0.0, 1.0),
                     "", "fraction")
    reference = np.asarray(reference if reference is not None else [],
                           dtype=float).reshape(-1)
    generated = np.asarray(generated if generated is not None else [],
                           dtype=float).reshape(-1)
    if reference.size != n or generated.size != n:
        chart.no_data()
        return chart.render()
    if r is None:
        r = pearson(reference, generated)
    for i, label in enumerate(SENTIMENT_CLASSES):
        chart.bar(i + 0.1, i + 0.5, reference[i], COLORS[0])
        chart.bar(i + 0.5, i + 0.9, generated[i], COLORS[1])
        chart.text(chart.x(i + 0.5), chart.bottom + 36, label, size=10,
                   anchor="middle")
    chart.legend("reference", COLORS[0])
    chart.legend("generated", COLORS[1])
    chart.legend("Pearson r = %.3f" % r, "#ffffff")
    return chart.render()


def sweep_curve(param: str, values: typing.Sequence,
                means: typing.Sequence, stds: typing.Sequence = None) -> str:
    """Mean corpus BLEU over the values of a swept parameter. Values are
    placed evenly, which suits the logarithmic grids of k and alpha."""
    means = list(means)
    top = max([m + (s or 0.0) for m, s in
               zip(means, stds or [0.0] * len(means))] or [0.0])
    chart = SvgChart("Sweep over %s" % param,
                     (-0.5, max(len(values) - 0.5, 0.5)),
                     (0.0, max(1.0, 1.1 * top)), param, "corpus BLEU")
    if not means:
        chart.no_data()
        return chart.render()
    xs = list(range(len(values)))
    chart.polyline(xs, means)
    chart.points(xs, means, radius=4)
    for x, value in zip(xs, values):
        chart.text(chart.x(x), chart.bottom + 36, "%g" % value, size=10,
                   anchor="middle")
    if stds:
        for x, m, s in zip(xs, means, stds):
            chart.errorbar(x, m - s, m + s)
    return chart.render()


def render_plot(kind: str, records: typing.Sequence[dict]) -> str:
    """Render a figure of the given kind from metrics records."""
    if kind not in PLOT_KINDS:
        raise InvalidConfig("Unknown plot kind '%s'!" % kind)
    evals = [r for r in records if r.get("phase") == "eval"]

    if kind == "similarity_scatter":
        pairs = [p for r in evals for p in r.get("pairs") or []]
        return similarity_scatter(pairs)

    if kind == "similarity_histogram":
        spread = next((r["spread"] for r in reversed(evals)
                       if r.get("spread")), None)
        if not spread:
            return similarity_histogram()
        return similarity_histogram(
            SpreadStats.from_dict(spread["after"]) if "after" in spread
            else None,
            SpreadStats.from_dict(spread["before"]) if "before" in spread
            else None)

    if kind == "sentiment_bars":
        found = [r["sentiment"] for r in evals if r.get("sentiment")]
        if not found:
            return sentiment_bars(None, None)
        reference = np.mean([s["reference"] for s in found], axis=0)
        generated = np.mean([s["generated"] for s in found], axis=0)
        return sentiment_bars(reference, generated)

    sweeps = [r for r in records if r.get("phase") == "sweep"]
    if not sweeps:
        return sweep_curve("parameter", [], [])
    param = sweeps[0]["extra"]["param"]
    return sweep_curve(param,
                       [r["extra"]["value"] for r in sweeps],
                       [r["bleu"] for r in sweeps],
                       [r["extra"].get("bleu_std", 0.0) for r in sweeps])
