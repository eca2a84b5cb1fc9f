#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
config.py

experiment configuration: `key = value` files with `#` comments and dotted
keys, overridden by `--dotted.key value` command-line pairs
"""

import logging
from dataclasses import dataclass, field, replace

from coilct.denoisers import DenoiserSpec
from coilct.errors import ConfigError, InvalidArgumentError
from coilct.field import FFM_MODES, FfmConfig, TrainConfig, desk_mlp, full_mlp
from coilct.solvers import SolverConfig
from coilct.tomo import FBP_WINDOWS

log = logging.getLogger(__name__)

METHODS = ('fbp', 'fbp_coil', 'fista_tv', 'gm_red', 'pnp_fista')
ITERATIVE_METHODS = ('fista_tv', 'gm_red', 'pnp_fista')
PROFILES = ('desk', 'full')
DEFAULT_METHODS = 'fbp, fbp_coil, fista_tv, fista_tv:0.5, gm_red, gm_red:0.5, pnp_fista, pnp_fista:0.5'


@dataclass(frozen=True)
class MethodRun:
    '''
    One reconstruction method of a grid; alpha None means the method takes
    no blending weight (fbp, fbp_coil).
    '''
    name: str
    alpha: float = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError('unknown method %r, expected one of %s' % (self.name, ', '.join(METHODS)))
        if self.name in ('fbp', 'fbp_coil'):
            if self.alpha is not None:
                raise ConfigError('%s takes no alpha' % self.name)
        elif self.alpha is None:
            object.__setattr__(self, 'alpha', 0.0)
        elif not 0.0 <= self.alpha <= 1.0:
            raise ConfigError('alpha for %s must lie in [0, 1], got %g' % (self.name, self.alpha))

    @property
    def label(self):
        if self.alpha is None or self.alpha == 0.0:
            return self.name
        return '%s:%g' % (self.name, self.alpha)

    @property
    def needs_field(self):
        return self.name == 'fbp_coil' or (self.alpha is not None and self.alpha > 0.0)


def parse_methods(text):
    runs = []
    for entry in text.split(','):
        entry = entry.strip()
        if not entry:
            continue
        name, _, alpha = entry.partition(':')
        try:
            runs.append(MethodRun(name.strip(), float(alpha) if alpha else None))
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError('bad method entry %r' % entry) from err
    if not runs:
        raise ConfigError('methods list is empty')
    return tuple(runs)


@dataclass(frozen=True)
class SolverSettings:
    '''
    Per-method solver keys; step_size 0 selects the power-iteration step.
    '''
    step_size: float = 0.0
    tv_weight: float = 0.0
    red_weight: float = 0.0
    max_iters: int = 200
    stop_tol: float = 1e-6
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)

    def solver_config(self, algorithm, step_size):
        return SolverConfig(algorithm, step_size, self.tv_weight, self.red_weight,
                            self.denoiser, self.max_iters, self.stop_tol)


def default_solvers():
    return {
        'fista_tv': SolverSettings(tv_weight=2.0, denoiser=DenoiserSpec('identity', 0.0)),
        'gm_red': SolverSettings(red_weight=50.0, denoiser=DenoiserSpec('gaussian', 1.0)),
        'pnp_fista': SolverSettings(denoiser=DenoiserSpec('tv', 1e-3)),
    }


def profile_train(profile):
    '''
    Training defaults of a profile; desk takes smaller batches and a slower
    decay so a 64x64 problem gets enough Adam steps.
    '''
    if profile == 'desk':
        return TrainConfig(initial_lr=1e-3, lr_decay_per_epoch=0.99, epochs=300, batch_size=128)
    return TrainConfig()


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    phantom_side: int = 64
    views_list: tuple = (60, 90, 120)
    snr_list_db: tuple = (30.0, 40.0, 50.0)
    field_views: int = 360
    ffm_mode: str = 'linear'
    L: int = 10
    profile: str = 'desk'
    train: TrainConfig = field(default_factory=lambda: profile_train('desk'))
    methods: tuple = field(default_factory=lambda: parse_methods(DEFAULT_METHODS))
    solvers: dict = field(default_factory=default_solvers)
    fbp_window: str = 'ram_lak'
    seed: int = 0
    output_dir: str = 'coil_output'

    def __post_init__(self):
        if not self.views_list or not self.snr_list_db:
            raise ConfigError('views_list and snr_list_db must not be empty')
        if any(p < 1 for p in self.views_list):
            raise ConfigError('every entry of views_list must be positive')
        if self.field_views < max(self.views_list):
            raise ConfigError('field_views (%d) must be at least max(views_list) (%d)'
                              % (self.field_views, max(self.views_list)))
        if self.phantom_side < 16:
            raise ConfigError('phantom_side must be at least 16')
        if self.ffm_mode not in FFM_MODES:
            raise ConfigError('ffm_mode must be one of %s' % ', '.join(FFM_MODES))
        if self.profile not in PROFILES:
            raise ConfigError('profile must be one of %s' % ', '.join(PROFILES))
        if self.L < 1:
            raise ConfigError('L must be positive')
        if self.fbp_window not in FBP_WINDOWS:
            raise ConfigError('fbp.window must be one of %s' % ', '.join(FBP_WINDOWS))
        if not 0 <= self.seed < 2**64:
            raise ConfigError('seed must be an unsigned 64-bit integer')

    @property
    def num_detectors(self):
        return self.phantom_side

    def ffm(self, mode=None):
        return FfmConfig(mode or self.ffm_mode, self.L)

    def mlp(self, mode=None):
        inputDim = self.ffm(mode).output_dim
        return desk_mlp(inputDim) if self.profile == 'desk' else full_mlp(inputDim)


def _int(value):
    return int(value, 0)


def _floats(value):
    return tuple(float(v) for v in value.split(',') if v.strip())


def _ints(value):
    return tuple(int(v) for v in value.split(',') if v.strip())


TOP_KEYS = {
    'phantom_side': _int,
    'views_list': _ints,
    'snr_list_db': _floats,
    'field_views': _int,
    'ffm_mode': str,
    'L': _int,
    'profile': str,
    'methods': parse_methods,
    'fbp.window': str,
    'seed': _int,
    'output_dir': str,
}
TRAIN_KEYS = {
    'train.initial_lr': ('initial_lr', float),
    'train.lr_decay_per_epoch': ('lr_decay_per_epoch', float),
    'train.epochs': ('epochs', _int),
    'train.batch_size': ('batch_size', _int),
    'train.adam_beta1': ('adam_beta1', float),
    'train.adam_beta2': ('adam_beta2', float),
    'train.adam_eps': ('adam_eps', float),
    'train.seed': ('seed', _int),
}
SOLVER_KEYS = {
    'step_size': float,
    'tv_weight': float,
    'red_weight': float,
    'max_iters': _int,
    'stop_tol': float,
}


def parse_config_text(text, source='<config>'):
    '''
    Parameters:
        text - contents of a config file
    Returns:
        dict of dotted key -> raw value text; later lines win
    '''
    pairs = {}
    for lineNo, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise ConfigError('%s:%d: expected "key = value"' % (source, lineNo))
        pairs[key.strip()] = value.strip()
    return pairs


def parse_overrides(args):
    '''
    `--dotted.key value` and `--dotted.key=value` pairs left over by argparse.
    '''
    pairs = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith('--') or len(arg) < 3:
            raise ConfigError('unexpected argument %r' % arg)
        key, sep, value = arg[2:].partition('=')
        if not sep:
            if i + 1 >= len(args):
                raise ConfigError('option --%s needs a value' % key)
            value = args[i + 1]
            i += 1
        pairs[key] = value
        i += 1
    return pairs


def build_config(pairs):
    '''
    Apply dotted key/value pairs to the defaults of the chosen profile.
    '''
    top = {}
    trainPairs = {}
    solverPairs = {}
    for key, value in pairs.items():
        try:
            if key in TOP_KEYS:
                top[key] = TOP_KEYS[key](value)
            elif key in TRAIN_KEYS:
                name, convert = TRAIN_KEYS[key]
                trainPairs[name] = convert(value)
            else:
                method, _, rest = key.partition('.')
                if method not in ITERATIVE_METHODS or not rest:
                    raise ConfigError('unknown config key %r' % key)
                if rest in SOLVER_KEYS:
                    solverPairs.setdefault(method, {})[rest] = SOLVER_KEYS[rest](value)
                elif rest == 'denoiser.kind':
                    solverPairs.setdefault(method, {})['kind'] = value
                elif rest == 'denoiser.sigma':
                    solverPairs.setdefault(method, {})['sigma'] = float(value)
                else:
                    raise ConfigError('unknown config key %r' % key)
        except ConfigError:
            raise
        except ValueError as err:
            raise ConfigError('bad value %r for %s' % (value, key)) from err

    profile = top.get('profile', 'desk')
    if profile not in PROFILES:
        raise ConfigError('profile must be one of %s' % ', '.join(PROFILES))
    try:
        train = replace(profile_train(profile), **trainPairs)
        solvers = default_solvers()
        for method, settings in solverPairs.items():
            current = solvers[method]
            denoiser = DenoiserSpec(settings.pop('kind', current.denoiser.kind),
                                    settings.pop('sigma', current.denoiser.sigma))
            solvers[method] = replace(current, denoiser=denoiser, **settings)
        if 'fbp.window' in top:
            top['fbp_window'] = top.pop('fbp.window')
        config = ExperimentConfig(train=train,
                                  solvers=solvers, **top)
    except InvalidArgumentError as err:
        raise ConfigError(str(err)) from err
    log.info('configuration: %d views settings, %d noise levels, %d methods',
             len(config.views_list), len(config.snr_list_db), len(config.methods))
    return config


def load_config(path=None, overrides=None):
    '''
    Parameters:
        path - optional config file
        overrides - optional dict of dotted key -> value text, applied last
    Returns:
        ExperimentConfig
    '''
    pairs = {}
    if path is not None:
        with open(path, 'r') as reader:
            pairs.update(parse_config_text(reader.read(), path))
    pairs.update(overrides or {})
    return build_config(pairs)
