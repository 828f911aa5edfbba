"""
Configuration defaults and the run configuration file.

A run configuration file is INI-style text with the sections ``[train]``,
``[doe]`` and ``[paths]``; every key maps onto a field of TrainConfig,
DOEConfig or the paths table below. Unknown sections and keys are errors.
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from src.errors import ConfigurationError

VARIANTS = ('BD', 'AE_BD', 'DC_BD', 'AE_KNN')

OUTPUT_DIR_ENV = 'STRESSBD_OUTPUT_DIR'
LOG_LEVEL_ENV = 'STRESSBD_LOG_LEVEL'

DEFAULT_CHECKPOINTS = (1000, 2000, 3000, 5000)

# Table I levels
DEFAULT_LEVELS = {
    'emc_modulus': (5.0, 11.0, 17.0, 23.0, 30.0),
    'emc_cte': (5.0, 9.0, 12.0, 16.0, 20.0),
    'die_size': (0.5, 0.8, 1.2, 1.5, 1.8),
    'gap_size': (0.2, 0.4, 0.6, 0.8, 1.0),
}

# layer name -> (amplitude A [MPa], decay length l [mm], far field B [MPa])
DEFAULT_SURROGATE = {
    'overmold': (100.0, 0.15, 10.0),
    'uf': (40.0, 0.40, 20.0),
    'rdl': (15.0, 0.80, 25.0),
}

PATH_KEYS = ('data', 'out', 'ledger')


@dataclass(frozen=True)
class TrainConfig:
    variant: str = 'DC_BD'
    lambda1: float = 0.1
    lambda2: float = 0.01
    k: int = 3
    total_iterations: int = 5000
    checkpoint_iterations: tuple = DEFAULT_CHECKPOINTS
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    kmeans_period: int = 1
    kmeans_max_iter: int = 5
    latent_dim: int = 16
    encoder_hidden: tuple = (256, 64)
    decoder_hidden: tuple = (64, 256)
    boundary_hidden: tuple = (32, 32)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f'invalid variant {self.variant!r}; valid variants: {", ".join(VARIANTS)}')
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError('lambda1 and lambda2 must be >= 0')
        if self.k < 1:
            raise ConfigurationError('k must be >= 1')
        if self.total_iterations < 0:
            raise ConfigurationError('total_iterations must be >= 0')
        for it in self.checkpoint_iterations:
            if not 1 <= it <= self.total_iterations:
                raise ConfigurationError(
                    f'checkpoint iteration {it} outside [1, {self.total_iterations}]')
        if self.batch_size < 1:
            raise ConfigurationError('batch_size must be >= 1')
        if self.learning_rate <= 0:
            raise ConfigurationError('learning_rate must be > 0')
        if self.kmeans_period < 1 or self.kmeans_max_iter < 1:
            raise ConfigurationError('kmeans_period and kmeans_max_iter must be >= 1')
        if self.latent_dim < 1:
            raise ConfigurationError('latent_dim must be >= 1')
        return self

    def replace(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        if 'checkpoint_iterations' not in changes and 'total_iterations' in changes:
            total = changes['total_iterations']
            changes['checkpoint_iterations'] = clip_checkpoints(self.checkpoint_iterations, total)
        return dataclasses.replace(self, **changes)

    @property
    def checkpoints(self):
        return tuple(sorted(set(self.checkpoint_iterations)))

    def to_dict(self):
        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigurationError(f'unknown train config key {key!r}')
            values[key] = tuple(value) if isinstance(value, list) else value
        return cls(**values)


def clip_checkpoints(checkpoints, total):
    """Keep the checkpoints that fit into ``total`` and always end on ``total``."""
    if total <= 0:
        return ()
    kept = sorted({c for c in checkpoints if 1 <= c <= total})
    if not kept or kept[-1] != total:
        kept.append(total)
    return tuple(kept)


@dataclass(frozen=True)
class DOEConfig:
    levels: dict = field(default_factory=lambda: dict(DEFAULT_LEVELS))
    surrogate: dict = field(default_factory=lambda: dict(DEFAULT_SURROGATE))
    n_train: int = 1500
    stratify: bool = True
    normalization: str = 'global'

    def validate(self):
        for name in DEFAULT_LEVELS:
            if not self.levels.get(name):
                raise ConfigurationError(f'empty level list for {name!r}')
        if self.normalization not in ('global', 'per_layer'):
            raise ConfigurationError(
                f'normalization must be "global" or "per_layer", got {self.normalization!r}')
        return self


@dataclass
class RunConfigFile:
    train: TrainConfig = field(default_factory=TrainConfig)
    doe: DOEConfig = field(default_factory=DOEConfig)
    paths: dict = field(default_factory=dict)


def _parse_value(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered not in ('true', 'false', 'yes', 'no', '1', '0'):
                raise ValueError(raw)
            return lowered in ('true', 'yes', '1')
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [item.strip() for item in raw.split(',') if item.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(item) for item in items)
            return tuple(int(item) for item in items)
    except ValueError:
        raise ConfigurationError(f'invalid value {raw!r} for {key!r}') from None
    return raw


def parse_levels(section, source='levels'):
    levels = dict(DEFAULT_LEVELS)
    for key, raw in section.items():
        if key not in DEFAULT_LEVELS:
            raise ConfigurationError(f'unknown level key {key!r} in {source}')
        levels[key] = _parse_value(raw, DEFAULT_LEVELS[key], key)
        if not levels[key]:
            raise ConfigurationError(f'empty level list for {key!r}')
    return levels


def load_run_config(path):
    """Parse a RunConfigFile; unknown sections or keys raise ConfigurationError."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigurationError(f'cannot read config file {path}: {exc}') from exc
    except configparser.Error as exc:
        raise ConfigurationError(f'malformed config file {path}: {exc}') from exc

    for section in parser.sections():
        if section not in ('train', 'doe', 'paths'):
            raise ConfigurationError(f'unknown config section [{section}] in {path}')

    train_defaults = TrainConfig()
    train_values = {}
    if parser.has_section('train'):
        for key, raw in parser.items('train'):
            if not hasattr(train_defaults, key):
                raise ConfigurationError(f'unknown key {key!r} in [train]')
            train_values[key] = _parse_value(raw, getattr(train_defaults, key), key)
    train = dataclasses.replace(train_defaults, **train_values)
    if 'total_iterations' in train_values and 'checkpoint_iterations' not in train_values:
        train = dataclasses.replace(
            train, checkpoint_iterations=clip_checkpoints(train.checkpoint_iterations,
                                                         train.total_iterations))

    doe_defaults = DOEConfig()
    doe_values = {}
    level_values = {}
    if parser.has_section('doe'):
        for key, raw in parser.items('doe'):
            if key in DEFAULT_LEVELS:
                level_values[key] = raw
            elif key in ('n_train', 'stratify', 'normalization'):
                doe_values[key] = _parse_value(raw, getattr(doe_defaults, key), key)
            else:
                raise ConfigurationError(f'unknown key {key!r} in [doe]')
    if level_values:
        doe_values['levels'] = parse_levels(level_values, source=str(path))
    doe = dataclasses.replace(doe_defaults, **doe_values)

    paths = {}
    if parser.has_section('paths'):
        for key, raw in parser.items('paths'):
            if key not in PATH_KEYS:
                raise ConfigurationError(f'unknown key {key!r} in [paths]')
            paths[key] = raw.strip()

    return RunConfigFile(train=train.validate(), doe=doe.validate(), paths=paths)


def load_levels_file(path):
    """A levels file is a bare ``key = v1, v2, ...`` list, optionally under [doe]."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding='utf-8') as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigurationError(f'cannot read levels file {path}: {exc}') from exc
    if not text.lstrip().startswith('['):
        text = '[doe]\n' + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f'malformed levels file {path}: {exc}') from exc
    if parser.sections() != ['doe']:
        raise ConfigurationError(f'levels file {path} must only contain [doe]')
    return parse_levels(dict(parser.items('doe')), source=str(path))


def default_output_dir():
    return os.environ.get(OUTPUT_DIR_ENV)
