##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# Command line interface "topoalign" with the subcommands synth, train,
# baseline, sweep, gradcheck, plot and compare.
#
# Every run parameter of RunConfig has an option of the same name
# (underscores become dashes). Option values override the config file
# given by --config, which overrides the environment variables TA_<KEY>.
#
# Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
# error.
#
##########################################################################

import dataclasses
import os
import sys

import click
from loguru import logger

from . import harness
from .config import RunConfig, load_config
from .errors import InvalidConfig, NumericError, TopoAlignError

LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> " \
             "| {message}"


class TopoAlignGroup(click.Group):
    """Command group mapping package errors to exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as error:
            error.exit_code = 1
            raise
        except TopoAlignError as error:
            click.echo("Error: %s" % error, err=True)
            ctx.exit(error.exit_code)


def config_options(func):
    """Add one option per RunConfig field and --config."""
    for f in reversed(dataclasses.fields(RunConfig)):
        name = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            func = click.option(name + "/--no-" + name[2:], f.name,
                                default=None,
                                help="Default: %s" % f.default)(func)
        else:
            func = click.option(name, f.name, type=type(f.default),
                                default=None,
                                help="Default: %s" % f.default)(func)
    return click.option("--config", "config_path", default=None,
                        type=click.Path(dir_okay=False),
                        help="Config file with key = value lines.")(func)


def make_config(config_path: str, options: dict) -> RunConfig:
    """Merge all parameter sources, validate and set up logging."""
    if config_path and not os.path.isfile(config_path):
        raise InvalidConfig("Config file '%s' not found!" % config_path)
    config = RunConfig.from_dict(load_config(config_path, **options))
    logger.remove()
    logger.add(sys.stderr, level=config.log_level.upper(), format=LOG_FORMAT)
    logger.enable("topoalign")
    return config


@click.group(cls=TopoAlignGroup)
@click.version_option(package_name="TopoAlign")
def cli():
    """Cross-modal translation with group topology preservation."""


@cli.command()
@click.option("-o", "--out", default="synthetic.jsonl", show_default=True,
              help="Dataset file to write.")
@click.option("--cosine-min", default=0.95, show_default=True,
              help="Minimum mean pairwise feature cosine.")
@click.option("--below-min", default=0.9, show_default=True,
              help="Minimum fraction of text pairs with BLEU below 0.06.")
@config_options
def synth(out, cosine_min, below_min, config_path, **options):
    """Generate a synthetic paired corpus and print its statistics.

    The corpus is only written if it meets both statistics."""
    config = make_config(config_path, options)
    stats = harness.cmd_synth(config.n, config.seed, out, config.bins,
                              config.segments, cosine_min, below_min)
    click.echo(str(stats))


@cli.command()
@config_options
def train(config_path, **options):
    """Cross-validated training of one loss variant."""
    config = make_config(config_path, options)
    report = harness.cmd_train(config)
    click.echo("%s: BLEU %.2f +- %.2f" % (report.run_id,
                                          report.aggregate.mean,
                                          report.aggregate.std))
    click.echo(report.directory)


@cli.command()
@config_options
def baseline(config_path, **options):
    """Tag kNN and tag representative baselines."""
    config = make_config(config_path, options)
    report = harness.cmd_baseline(config)
    for name, agg in report.scores.items():
        click.echo("%s: BLEU %.2f +- %.2f" % (name, agg.mean, agg.std))
    click.echo(report.directory)


def _parse_values(ctx, param, value):
    try:
        return [float(v) if any(c in v for c in ".e") else int(v)
                for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter("expected a comma separated list of "
                                 "numbers")


@cli.command()
@click.option("--param", "sweep_param", required=True,
              type=click.Choice(harness.SWEEP_PARAMS),
              help="Parameter to sweep.")
@click.option("--values", required=True, callback=_parse_values,
              help="Comma separated values, e.g. 4,32,256.")
@config_options
def sweep(sweep_param, values, config_path, **options):
    """One cross-validated training per parameter value."""
    config = make_config(config_path, options)
    report = harness.cmd_sweep(config, sweep_param, values)
    for row in report.rows():
        click.echo(",".join(row))
    click.echo(report.directory)


@cli.command()
@click.option("--instances", default=100, show_default=True,
              help="Random instances per loss.")
@click.option("--h", "step", default=1e-6, show_default=True,
              help="Finite-difference step.")
@click.option("--tol", default=1e-5, show_default=True,
              help="Relative error tolerance.")
@click.option("--seed", default=0, show_default=True)
@click.option("--log-level", default="INFO", show_default=True)
def gradcheck(instances, step, tol, seed, log_level):
    """Finite-difference check of every loss."""
    make_config(None, {"log_level": log_level})
    summary = harness.cmd_gradcheck(instances, step, tol, seed)
    click.echo(str(summary))
    if not summary.passed:
        raise NumericError("Gradient check failed for %s!"
                           % ", ".join(summary.failed()))


@cli.command()
@click.argument("metrics", type=click.Path(dir_okay=False))
@click.option("--kind", required=True,
              help="similarity_scatter, similarity_histogram, "
                   "sentiment_bars or sweep_curve.")
@click.option("-o", "--out", default=None,
              help="SVG file. Default: <kind>.svg")
def plot(metrics, kind, out):
    """Render a figure from a metrics.jsonl file."""
    out = out or "%s.svg" % kind
    harness.cmd_plot(metrics, kind, out)
    click.echo(out)


@cli.command()
@click.argument("metrics_a", type=click.Path(dir_okay=False))
@click.argument("metrics_b", type=click.Path(dir_okay=False))
@click.option("--variant-a", default=None, help="Variant filter of run A.")
@click.option("--variant-b", default=None, help="Variant filter of run B.")
def compare(metrics_a, metrics_b, variant_a, variant_b):
    """Paired sign test of the per-fold BLEU of two runs."""
    result = harness.compare_runs(harness.read_metrics(metrics_a),
                                  harness.read_metrics(metrics_b),
                                  variant_a, variant_b)
    click.echo("wins %d, losses %d, ties %d, p = %.4f"
               % (result.wins, result.losses, result.ties, result.p_value))


if __name__ == "__main__":
    cli()
