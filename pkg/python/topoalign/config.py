##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################
#
# This module provides the run configuration class RunConfig and the
# function load_config() to read configuration parameters.
#
# The values of all parameters are taken from the defaults of RunConfig,
# environment variables, a config file and keyword arguments. Each
# source overrides the former ones.
#
# The name of the environment variable of key foo is TA_FOO.
#
# The name of the config file is "$HOME\topoalign.cfg" (Windows) or
# "~/.topoalign" (other OS). It is expected to be a text file. Leading
# and trailing white space is ignored. Lines starting with "#" are
# ignored. The parameters are taken from lines in the form
# "<key> = <value>". Optional white space before and after the equal
# sign is ignored. The keywords are case-insensitive.
#
##########################################################################

import dataclasses
import os
import platform
import typing
from dataclasses import dataclass

from .errors import InvalidConfig

VARIANTS = (
    "coordinate",
    "+pairwise",
    "+triplet",
    "+contrastive",
    "+sentiment",
    "+gtp",
    "ours",
    "ours_no_sentiment",
    "encoder_decoder",
)


@dataclass
class RunConfig:
    """All parameters of a training, baseline or sweep run."""

    seed: int = 0
    folds: int = 5
    trials: int = 3
    pretrain_epochs: int = 100
    joint_epochs: int = 200
    lr: float = 5e-5
    pretrain_lr: float = 1e-3
    batch: int = 8
    alpha: float = 500.0
    beta: float = 5.0
    gamma: float = 0.25
    k: int = 32
    momentum: float = 0.999
    segments: int = 4
    dim: int = 64
    bins: int = 32
    kernel: int = 3
    variant: str = "ours"
    max_len: int = 48
    temperature: float = 1.0
    symmetric_bleu: bool = False
    gtp_max_n: int = 2
    eval_max_n: int = 4
    direct_generation: bool = False
    generation_loss: bool = True
    pair_threshold: float = 0.1
    triplet_margin: float = 0.2
    contrastive_temperature: float = 0.5
    n: int = 200
    dataset: str = ""
    out_dir: str = "runs"
    log_level: str = "INFO"

    @classmethod
    def keys(cls) -> typing.List[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, mapping: dict) -> "RunConfig":
        """Build a validated config from a (partial) parameter dict."""
        values = {}
        for f in dataclasses.fields(cls):
            if f.name in mapping:
                values[f.name] = _coerce(f.name, mapping[f.name], f.default)
        config = cls(**values)
        config.validate()
        return config

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        """Return a validated copy with some parameters changed."""
        values = self.to_dict()
        values.update(changes)
        return RunConfig.from_dict(values)

    def validate(self):
        """Check the value ranges of all parameters."""
        if self.k < 2:
            raise InvalidConfig("Group size k must be at least 2, got %d!"
                                % self.k)
        if self.batch < 1:
            raise InvalidConfig("Batch size must be at least 1!")
        for key in ("lr", "pretrain_lr", "temperature",
                    "contrastive_temperature"):
            if getattr(self, key) <= 0:
                raise InvalidConfig("Parameter '%s' must be positive!" % key)
        for key in ("alpha", "beta", "gamma", "triplet_margin",
                    "pair_threshold"):
            if getattr(self, key) < 0:
                raise InvalidConfig("Parameter '%s' must not be negative!"
                                    % key)
        if not 0.0 <= self.momentum <= 1.0:
            raise InvalidConfig("Momentum must be in [0, 1], got %g!"
                                % self.momentum)
        if self.variant not in VARIANTS:
            raise InvalidConfig("Unknown loss variant '%s'!" % self.variant)
        for key in ("segments", "dim", "bins", "kernel", "folds", "trials",
                    "max_len", "gtp_max_n", "eval_max_n"):
            if getattr(self, key) < 1:
                raise InvalidConfig("Parameter '%s' must be at least 1!"
                                    % key)
        if self.kernel % 2 == 0:
            raise InvalidConfig("Convolution kernel width must be odd!")
        if self.pretrain_epochs < 0 or self.joint_epochs < 0:
            raise InvalidConfig("Epoch counts must not be negative!")
        if self.n < 10:
            raise InvalidConfig("Synthetic corpus needs at least 10 samples!")


def _coerce(key: str, value, default):
    """Convert value to the type of the default value of key."""
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                text = value.strip().lower()
                if text in ("1", "true", "yes", "on"):
                    return True
                if text in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        raise InvalidConfig("Invalid value %r for parameter '%s'!"
                            % (value, key))


def default_config_path() -> str:
    if platform.system() == "Windows":
        return os.path.join(os.path.expanduser("~"), "topoalign.cfg")
    return os.path.join(os.path.expanduser("~"), ".topoalign")


def load_config(config_path: str = None, **kwargs) -> dict:
    """Get the run parameters.

    This function uses kwargs, the config file and environmental
    variables as sources for each parameter. The former sources
    overriding the latter ones.

    Args:
        config_path: Path of the config file. If this is None, the default
                     file will be used.
        kwargs: Parameter values as keyword arguments. None values are
                ignored.

    Returns:
        dict: A dictionary containing all parameters of RunConfig, each
              converted to the type of its default value.
    """
    defaults = RunConfig().to_dict()
    config = dict(defaults)

    # Get values from environment variables
    for key in config:
        name = "TA_%s" % key.upper()
        if name in os.environ:
            config[key] = os.environ[name].strip()

    # Get values from config file
    if not config_path:
        config_path = default_config_path()
    if os.path.exists(config_path):
        with open(config_path, "r") as fp:
            for line in fp.readlines():
                line = line.strip()
                if line[:1] == "#":
                    continue
                line = line.split("=", 1)
                if len(line) < 2:
                    continue
                key = line[0].strip().lower()
                if key in config:
                    config[key] = line[1].strip()

    # Use keyword arguments
    for key in config:
        if kwargs.get(key) is not None:
            config[key] = kwargs[key]

    return {key: _coerce(key, value, defaults[key])
            for key, value in config.items()}
