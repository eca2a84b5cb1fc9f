#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
field.py

coordinate-based neural representation of a sinogram: Fourier feature
mapping, a ReLU MLP with input skip connections, a hand-written backward
pass, Adam training and querying on a target geometry

Parameter flattening order (gradients, Adam state): layers in forward order,
each layer's weight matrix row-major (fan_in x fan_out) followed by its bias.
The last layer is the scalar output head.
"""

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from coilct.errors import (FormatError, InvalidArgumentError, NumericOverflowError,
                           TrainingDivergedError)
from coilct.geometry import coordinates_of
from coilct.tomo import Sinogram

log = logging.getLogger(__name__)

FFM_MODES = ('none', 'positional', 'linear')
FIELD_MAGIC = b'COILNF1\x00'
FIELD_VERSION = 1
QUERY_CHUNK = 65536


@dataclass(frozen=True)
class FfmConfig:
    mode: str = 'linear'
    num_frequencies: int = 10

    def __post_init__(self):
        if self.mode not in FFM_MODES:
            raise InvalidArgumentError('unknown FFM mode %r' % (self.mode,))
        if int(self.num_frequencies) != self.num_frequencies or self.num_frequencies < 1:
            raise InvalidArgumentError('num_frequencies must be a positive integer')

    def frequencies(self):
        '''
        k_1..k_L: linear spacing pi*i/2, or positional encoding 2^(i-1)
        '''
        i = np.arange(1, self.num_frequencies + 1, dtype=np.float64)
        if self.mode == 'linear':
            return np.pi * i / 2.0
        if self.mode == 'positional':
            return 2.0 ** (i - 1.0)
        return np.zeros(0)

    @property
    def output_dim(self):
        return 2 if self.mode == 'none' else 4 * self.num_frequencies


@dataclass(frozen=True)
class MlpConfig:
    '''
    input_dim - length of the mapped coordinate gamma(v)
    hidden_width - neurons in each ReLU layer
    num_hidden_layers - number of ReLU layers
    penultimate_width - width of the last, non-activated layer
    skip_layers - after each listed layer gamma(v) is concatenated onto its output
    '''
    input_dim: int
    hidden_width: int = 256
    num_hidden_layers: int = 16
    penultimate_width: int = 128
    skip_layers: frozenset = frozenset(range(2, 16, 2))

    def __post_init__(self):
        for name in ('input_dim', 'hidden_width', 'num_hidden_layers', 'penultimate_width'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgumentError('%s must be a positive integer' % name)
        skips = frozenset(int(s) for s in self.skip_layers)
        allowed = set(range(2, self.num_hidden_layers - 1, 2))
        if not skips <= allowed:
            raise InvalidArgumentError('skip layers %s not within %s'
                                       % (sorted(skips), sorted(allowed)))
        object.__setattr__(self, 'skip_layers', skips)

    def layer_shapes(self):
        '''
        (fan_in, fan_out) of every layer: ReLU layers, penultimate, output head
        '''
        shapes = []
        fanIn = self.input_dim
        for layer in range(1, self.num_hidden_layers + 1):
            shapes.append((fanIn, self.hidden_width))
            fanIn = self.hidden_width + (self.input_dim if layer in self.skip_layers else 0)
        shapes.append((fanIn, self.penultimate_width))
        shapes.append((self.penultimate_width, 1))
        return shapes

    def num_parameters(self):
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())


def full_mlp(input_dim):
    '''17 fully-connected layers, 256 wide, skips after layers 2, 4, ..., 14'''
    return MlpConfig(input_dim, 256, 16, 128, frozenset(range(2, 16, 2)))


def desk_mlp(input_dim):
    '''5 fully-connected layers, 128 wide, one skip after layer 2'''
    return MlpConfig(input_dim, 128, 4, 64, frozenset({2}))


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-3
    lr_decay_per_epoch: float = 0.97
    epochs: int = 300
    batch_size: int = 1024
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise InvalidArgumentError('initial_lr must be positive')
        if not 0 < self.lr_decay_per_epoch <= 1:
            raise InvalidArgumentError('lr_decay_per_epoch must lie in (0, 1]')
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise InvalidArgumentError('epochs must be a positive integer')
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise InvalidArgumentError('batch_size must be a positive integer')
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidArgumentError('Adam betas must lie in [0, 1)')
        if not self.adam_eps > 0:
            raise InvalidArgumentError('adam_eps must be positive')
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidArgumentError('seed must be an unsigned 64-bit integer')

    def learning_rate(self, epoch):
        return self.initial_lr * self.lr_decay_per_epoch ** epoch


@dataclass(frozen=True, eq=False)
class SampleSet:
    '''
    Coordinate-response pairs: coords (N, 2) of (theta/pi, l), responses (N,)
    '''
    coords: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64).reshape(-1, 2)
        responses = np.array(self.responses, dtype=np.float64).ravel()
        if coords.shape[0] != responses.size:
            raise InvalidArgumentError('%d coordinates but %d responses'
                                       % (coords.shape[0], responses.size))
        object.__setattr__(self, 'coords', coords)
        object.__setattr__(self, 'responses', responses)

    def __len__(self):
        return self.responses.size

    def subset(self, index):
        return SampleSet(self.coords[index], self.responses[index])


def samples_of(sinogram):
    '''
    Coordinate-response pairs of every entry of a sinogram.
    '''
    return SampleSet(coordinates_of(sinogram.geometry), sinogram.responses.ravel())


@dataclass(frozen=True, eq=False)
class NeuralField:
    '''
    Trained measurement-field representation. `layers` is a tuple of
    (W, b) pairs in forward order; the last pair is the output head.
    '''
    ffm: FfmConfig
    mlp: MlpConfig
    layers: tuple = field(repr=False)

    def __post_init__(self):
        if self.mlp.input_dim != self.ffm.output_dim:
            raise InvalidArgumentError('MLP input_dim %d does not match FFM output %d'
                                       % (self.mlp.input_dim, self.ffm.output_dim))
        shapes = self.mlp.layer_shapes()
        if len(self.layers) != len(shapes):
            raise InvalidArgumentError('expected %d layers, got %d'
                                       % (len(shapes), len(self.layers)))
        frozen = []
        for (fanIn, fanOut), (W, b) in zip(shapes, self.layers):
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if W.size != fanIn * fanOut or b.size != fanOut:
                raise InvalidArgumentError('layer of shape %s does not match (%d, %d)'
                                           % (W.shape, fanIn, fanOut))
            W = W.reshape(fanIn, fanOut)
            b = b.reshape(fanOut)
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise InvalidArgumentError('field parameters must be finite')
            W.setflags(write=False)
            b.setflags(write=False)
            frozen.append((W, b))
        object.__setattr__(self, 'layers', tuple(frozen))

    def parameters(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    @classmethod
    def from_parameters(cls, ffm, mlp, flat):
        return cls(ffm, mlp, tuple(_unflatten(flat, mlp.layer_shapes())))


def _unflatten(flat, shapes):
    '''
    Views of (W, b) pairs into the flat parameter vector.
    '''
    layers = []
    pos = 0
    for fanIn, fanOut in shapes:
        W = flat[pos:pos + fanIn * fanOut].reshape(fanIn, fanOut)
        pos += fanIn * fanOut
        b = flat[pos:pos + fanOut]
        pos += fanOut
        layers.append((W, b))
    return layers


def ffm_apply(config, v):
    '''
    Parameters:
        config - FfmConfig
        v - one coordinate (2,) or a batch (N, 2), components in [0, 1]
    Returns:
        gamma(v): per coordinate component [sin(k_1 pi v), cos(k_1 pi v), ...,
        sin(k_L pi v), cos(k_L pi v)], length 4L; v itself when mode is 'none'
    '''
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    V = v.reshape(-1, 2)
    if config.mode == 'none':
        out = V.copy()
    else:
        arg = np.pi * V[:, :, None] * config.frequencies()[None, None, :]
        out = np.stack([np.sin(arg), np.cos(arg)], axis=-1).reshape(V.shape[0], -1)
    return out[0] if single else out


def _check_finite(values, layer):
    if not np.all(np.isfinite(values)):
        raise NumericOverflowError(layer)


def _forward(layers, skips, G):
    '''
    Returns the scalar outputs and, per layer, the input activation and the
    pre-activation needed by the backward pass.
    '''
    nHidden = len(layers) - 2
    cache = []
    a = G
    with np.errstate(over='ignore', invalid='ignore'):
        for layer in range(1, nHidden + 1):
            W, b = layers[layer - 1]
            z = a @ W + b
            _check_finite(z, layer)
            cache.append((a, z))
            h = np.maximum(z, 0.0)
            a = np.concatenate([h, G], axis=1) if layer in skips else h
        W, b = layers[nHidden]
        p = a @ W + b
        _check_finite(p, nHidden + 1)
        cache.append((a, None))
        W, b = layers[nHidden + 1]
        out = p @ W + b
        _check_finite(out, nHidden + 2)
        cache.append((p, None))
    return out[:, 0], cache


def _backward(layers, skips, cache, dout, hiddenWidth):
    '''
    Reverse-mode pass for an upstream gradient dout (N,) on the outputs.
    Returns the flat parameter gradient.
    '''
    nHidden = len(layers) - 2
    grads = [None] * len(layers)

    p, _ = cache[nHidden + 1]
    W, _ = layers[nHidden + 1]
    d = dout[:, None]
    grads[nHidden + 1] = (p.T @ d, d.sum(axis=0))
    d = d @ W.T

    a, _ = cache[nHidden]
    W, _ = layers[nHidden]
    grads[nHidden] = (a.T @ d, d.sum(axis=0))
    d = d @ W.T

    for layer in range(nHidden, 0, -1):
        if layer in skips:
            #   gamma(v) is fixed, only the ReLU branch carries gradient
            d = d[:, :hiddenWidth]
        a, z = cache[layer - 1]
        W, _ = layers[layer - 1]
        d = d * (z > 0.0)
        grads[layer - 1] = (a.T @ d, d.sum(axis=0))
        if layer > 1:
            d = d @ W.T

    return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


def field_forward(field, v):
    '''
    Parameters:
        field - NeuralField
        v - one coordinate (2,) or a batch (N, 2)
    Returns:
        M_phi(v), a float for one coordinate or an (N,) array
    '''
    v = np.asarray(v, dtype=np.float64)
    out, _ = _forward(field.layers, field.mlp.skip_layers, ffm_apply(field.ffm, v.reshape(-1, 2)))
    return float(out[0]) if v.ndim == 1 else out


def _loss_and_grad(layers, mlp, G, responses):
    out, cache = _forward(layers, mlp.skip_layers, G)
    residual = out - responses
    n = responses.size
    loss = float(np.dot(residual, residual) / n)
    grad = _backward(layers, mlp.skip_layers, cache, 2.0 * residual / n, mlp.hidden_width)
    return loss, grad


def field_loss_and_grad(field, batch):
    '''
    Parameters:
        field - NeuralField
        batch - SampleSet, not empty
    Returns:
        mean squared error over the batch, and its exact gradient with respect
        to every parameter in the flattening order of NeuralField.parameters()
    '''
    if len(batch) == 0:
        raise InvalidArgumentError('loss of an empty batch is undefined')
    G = ffm_apply(field.ffm, batch.coords)
    return _loss_and_grad(field.layers, field.mlp, G, batch.responses)


def init_parameters(mlp, rng):
    '''
    Uniform in +-sqrt(6/fan_in) per weight matrix, biases zero.
    '''
    chunks = []
    for fanIn, fanOut in mlp.layer_shapes():
        bound = np.sqrt(6.0 / fanIn)
        chunks.append(rng.uniform(-bound, bound, fanIn * fanOut))
        chunks.append(np.zeros(fanOut))
    return np.concatenate(chunks)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grad, state, lr, train):
    '''
    One bias-corrected Adam update, in place on params and state.

    eps is added to sqrt(v_hat), the usual form, not to sqrt(v) before the
    bias correction. The first step from zero state is therefore
    -lr * g / (|g| + eps), close to -lr * sign(g), and not the eps * sqrt(1 - beta2)
    scaled variant.
    '''
    b1 = train.adam_beta1
    b2 = train.adam_beta2
    state.t += 1
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    mHat = state.m / (1.0 - b1 ** state.t)
    vHat = state.v / (1.0 - b2 ** state.t)
    params -= lr * mHat / (np.sqrt(vHat) + train.adam_eps)


def train_field(samples, ffm, mlp, train):
    '''
    Parameters:
        samples - SampleSet of coordinate-response pairs, not empty
        ffm, mlp, train - FfmConfig, MlpConfig, TrainConfig
    Returns:
        trained NeuralField, and the full-data mean squared error after each epoch
    '''
    if len(samples) == 0:
        raise InvalidArgumentError('cannot train a field on zero samples')
    if mlp.input_dim != ffm.output_dim:
        raise InvalidArgumentError('MLP input_dim %d does not match FFM output %d'
                                   % (mlp.input_dim, ffm.output_dim))
    rng = np.random.default_rng(int(train.seed))
    params = init_parameters(mlp, rng)
    layers = _unflatten(params, mlp.layer_shapes())
    state = AdamState.zeros(params.size)
    G = ffm_apply(ffm, samples.coords)
    r = samples.responses
    nSamples = r.size
    history = np.zeros(train.epochs)

    log.info('training field: %d samples, %d parameters, %d epochs',
             nSamples, params.size, train.epochs)
    for epoch in range(train.epochs):
        lr = train.learning_rate(epoch)
        order = rng.permutation(nSamples)
        try:
            for start in range(0, nSamples, train.batch_size):
                idx = order[start:start + train.batch_size]
                loss, grad = _loss_and_grad(layers, mlp, G[idx], r[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                adam_step(params, grad, state, lr, train)
            out, _ = _forward(layers, mlp.skip_layers, G)
        except NumericOverflowError as err:
            raise TrainingDivergedError(epoch, 'training diverged at epoch %d (%s)'
                                        % (epoch, err)) from err
        residual = out - r
        history[epoch] = np.dot(residual, residual) / nSamples
        if not np.isfinite(history[epoch]):
            raise TrainingDivergedError(epoch)
        if epoch % 25 == 0 or epoch == train.epochs - 1:
            log.info('epoch %4d  lr %.3e  loss %.6e', epoch, lr, history[epoch])

    return NeuralField.from_parameters(ffm, mlp, params.copy()), history


def scale_output(field, scale):
    '''
    Field whose output is `scale` times the input field's output.
    '''
    layers = list(field.layers)
    W, b = layers[-1]
    layers[-1] = (W * scale, b * scale)
    return NeuralField(field.ffm, field.mlp, tuple(layers))


def closed_samples(sinogram):
    '''
    Samples of every sinogram entry, plus the view at theta = 0 repeated at
    theta = pi with the detector axis reversed, s(pi, t) = s(0, -t).
    Sinograms whose first view is not at 0 are returned as plain samples.
    '''
    samples = samples_of(sinogram)
    geometry = sinogram.geometry
    if geometry.angles[0] != 0.0:
        return samples
    ell = 1.0 - geometry.detector_positions
    closing = np.column_stack([np.ones(ell.size), ell])
    return SampleSet(np.vstack([samples.coords, closing]),
                     np.concatenate([samples.responses, sinogram.responses[0]]))


def fit_sinogram_field(sinogram, ffm, mlp, train):
    '''
    Train a field on every entry of `sinogram`, closed at theta = pi (see
    closed_samples). Responses are divided by their peak magnitude for
    training and the scale is folded back into the output head, so the
    returned field answers in the sinogram's units; the loss history stays
    in the normalised units.
    '''
    samples = closed_samples(sinogram)
    scale = float(np.max(np.abs(samples.responses)))
    if scale == 0.0:
        scale = 1.0
    normalised = SampleSet(samples.coords, samples.responses / scale)
    trained, history = train_field(normalised, ffm, mlp, train)
    return scale_output(trained, scale), history


def query_field(field, coordinates, target_geometry):
    '''
    Parameters:
        field - NeuralField
        coordinates - (P*D, 2) array, as produced by coordinates_of(target_geometry)
        target_geometry - Geometry of the synthesized sinogram
    Returns:
        Sinogram of field responses (the CoIL field)
    '''
    coords = np.asarray(coordinates, dtype=np.float64).reshape(-1, 2)
    expected = target_geometry.num_views * target_geometry.num_detectors
    if coords.shape[0] != expected:
        raise InvalidArgumentError('%d coordinates for a geometry of %d samples'
                                   % (coords.shape[0], expected))
    out = np.empty(expected)
    for start in range(0, expected, QUERY_CHUNK):
        out[start:start + QUERY_CHUNK] = field_forward(field, coords[start:start + QUERY_CHUNK])
    return Sinogram(target_geometry, out)


def field_to_bytes(field):
    '''
    COILNF1 container: magic, then little-endian version (u32), FFM mode (u8),
    L (u32), layer count (u32) and per layer rows (u32), cols (u32), weights
    row-major f64, biases f64.
    '''
    parts = [FIELD_MAGIC,
             struct.pack('<IBII', FIELD_VERSION, FFM_MODES.index(field.ffm.mode),
                         field.ffm.num_frequencies, len(field.layers))]
    for W, b in field.layers:
        parts.append(struct.pack('<II', W.shape[0], W.shape[1]))
        parts.append(W.astype('<f8').tobytes())
        parts.append(b.astype('<f8').tobytes())
    return b''.join(parts)


def field_from_bytes(data):
    if len(data) < 8 or data[:8] != FIELD_MAGIC:
        raise FormatError('magic', 'not a COILNF1 field file')
    header = struct.calcsize('<IBII')
    if len(data) < 8 + header:
        raise FormatError('truncated', 'header is incomplete')
    version, mode, nFreq, nLayers = struct.unpack_from('<IBII', data, 8)
    if version != FIELD_VERSION:
        raise FormatError('version', 'unsupported field version %d' % version)
    if mode >= len(FFM_MODES):
        raise FormatError('ffm_mode', 'unknown FFM mode code %d' % mode)
    if nLayers < 3:
        raise FormatError('layers', 'a field needs at least 3 layers, found %d' % nLayers)
    pos = 8 + header
    layers = []
    for _ in range(nLayers):
        if len(data) < pos + 8:
            raise FormatError('truncated', 'layer header is incomplete')
        rows, cols = struct.unpack_from('<II', data, pos)
        pos += 8
        nBytes = 8 * (rows * cols + cols)
        if len(data) < pos + nBytes:
            raise FormatError('truncated', 'layer data is incomplete')
        W = np.frombuffer(data, dtype='<f8', count=rows * cols, offset=pos).reshape(rows, cols)
        b = np.frombuffer(data, dtype='<f8', count=cols, offset=pos + 8 * rows * cols)
        pos += nBytes
        layers.append((W.astype(np.float64), b.astype(np.float64)))
    if pos != len(data):
        raise FormatError('trailing', '%d unexpected bytes after the last layer' % (len(data) - pos))

    ffm = FfmConfig(FFM_MODES[mode], nFreq)
    inputDim = layers[0][0].shape[0]
    width = layers[0][0].shape[1]
    nHidden = nLayers - 2
    skips = frozenset(layer for layer in range(1, nHidden)
                      if layers[layer][0].shape[0] == width + inputDim)
    try:
        mlp = MlpConfig(inputDim, width, nHidden, layers[nHidden][0].shape[1], skips)
        return NeuralField(ffm, mlp, tuple(layers))
    except InvalidArgumentError as err:
        raise FormatError('layers', str(err)) from err


def save_field(field, path):
    with open(path, 'wb') as f:
        f.write(field_to_bytes(field))
    log.info('wrote field %s', path)


def load_field(path):
    with open(path, 'rb') as f:
        return field_from_bytes(f.read())
