#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
tomo.py

parallel-beam Radon projector, its exact adjoint, filtered backprojection
and measurement noise at a prescribed input SNR

The projector marches every ray in half-pixel steps and samples the image
with bilinear interpolation. The interpolation weights are accumulated once
per (geometry, image side) into a sparse system matrix; the backprojector is
the transpose of that same matrix.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.sparse as sp

from coilct.errors import InvalidArgumentError
from coilct.geometry import Geometry, Image, detector_offsets, detector_span, detector_spacing

log = logging.getLogger(__name__)

STEP_FRACTION = 0.5
ANGLE_MATCH_TOL = 1e-9
FBP_WINDOWS = ('ram_lak', 'hann')


@dataclass(frozen=True, eq=False)
class Sinogram:
    '''
    Line-integral measurements, `responses` held as a read-only (P, D) array
    in view-major order. A flat array of P*D values is accepted.
    '''
    geometry: Geometry
    responses: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.geometry.num_views, self.geometry.num_detectors)
        arr = np.array(self.responses, dtype=np.float64)
        if arr.size != shape[0] * shape[1]:
            raise InvalidArgumentError('expected %d responses, got %d'
                                       % (shape[0] * shape[1], arr.size))
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError('sinogram contains non-finite values')
        arr.setflags(write=False)
        object.__setattr__(self, 'responses', arr)

    def with_responses(self, responses):
        return Sinogram(self.geometry, responses)


@dataclass(frozen=True)
class NoiseSpec:
    input_snr_db: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.input_snr_db):
            raise InvalidArgumentError('input_snr_db must be finite')
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidArgumentError('seed must be an unsigned 64-bit integer')


def system_matrix(geometry, side, pixel_size=1.0):
    '''
    Parameters:
        geometry - Geometry
        side - image pixels per edge
        pixel_size - physical size of one pixel
    Returns:
        scipy.sparse CSR matrix of shape (P*D, side*side); cached
    '''
    return _build_system_matrix(geometry.angles.tobytes(),
                                geometry.detector_positions.tobytes(),
                                int(side), float(pixel_size))


@lru_cache(maxsize=6)
def _build_system_matrix(angle_bytes, position_bytes, side, pixel_size):
    angles = np.frombuffer(angle_bytes, dtype=np.float64)
    positions = np.frombuffer(position_bytes, dtype=np.float64)
    nDets = positions.size
    span = detector_span(side, pixel_size)
    offsets = detector_offsets(positions, side, pixel_size)
    step = STEP_FRACTION * pixel_size
    nSteps = int(np.ceil(span / step))
    along = -0.5 * nSteps * step + (np.arange(nSteps) + 0.5) * step
    centre = 0.5 * (side - 1)
    rayIndex = np.broadcast_to(np.arange(nDets)[:, None], (nDets, nSteps))

    blocks = []
    for theta in angles:
        c = np.cos(theta)
        s = np.sin(theta)
        #   sample points along every ray of this view, in pixel units
        x = offsets[:, None] * c - along[None, :] * s
        y = offsets[:, None] * s + along[None, :] * c
        col = x / pixel_size + centre
        row = centre - y / pixel_size
        c0 = np.floor(col)
        r0 = np.floor(row)
        fc = col - c0
        fr = row - r0
        c0 = c0.astype(np.int64)
        r0 = r0.astype(np.int64)

        rows, cols, vals = [], [], []
        for dr, dc, w in ((0, 0, (1.0 - fr) * (1.0 - fc)),
                          (0, 1, (1.0 - fr) * fc),
                          (1, 0, fr * (1.0 - fc)),
                          (1, 1, fr * fc)):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < side) & (cc >= 0) & (cc < side) & (w > 0.0)
            rows.append(rayIndex[ok])
            cols.append(rr[ok] * side + cc[ok])
            vals.append(w[ok] * step)
        block = sp.coo_matrix((np.concatenate(vals),
                               (np.concatenate(rows), np.concatenate(cols))),
                              shape=(nDets, side * side)).tocsr()
        blocks.append(block)

    matrix = sp.vstack(blocks, format='csr')
    log.info('system matrix: %d views x %d detectors onto %dx%d, %d nonzeros',
             angles.size, nDets, side, side, matrix.nnz)
    return matrix


def radon_forward(image, geometry):
    '''
    Parameters:
        image - Image
        geometry - Geometry
    Returns:
        Sinogram of line integrals (physical units) of `image`
    '''
    A = system_matrix(geometry, image.side, image.pixel_size)
    return Sinogram(geometry, A @ image.pixels.ravel())


def radon_adjoint(sinogram, side, pixel_size=1.0):
    '''
    Parameters:
        sinogram - Sinogram
        side - pixels per edge of the image grid the sinogram refers to
    Returns:
        Image A^T y, the exact transpose of radon_forward
    '''
    A = system_matrix(sinogram.geometry, side, pixel_size)
    return Image((A.T @ sinogram.responses.ravel()).reshape(side, side), pixel_size)


def _next_pow2(n):
    return 1 << int(np.ceil(np.log2(max(n, 1))))


def ramp_filter(num_padded, window='ram_lak'):
    '''
    Frequency response of the band-limited ramp on `num_padded` rfft bins,
    in detector-index units (|nu| in cycles per sample, 0.5 at Nyquist).
    Built from the spatial Ram-Lak kernel, which leaves a small positive DC
    term instead of the zero of a sampled |nu|.
    '''
    if window not in FBP_WINDOWS:
        raise InvalidArgumentError('unknown FBP window %r' % (window,))
    k = np.fft.fftfreq(num_padded) * num_padded
    kernel = np.zeros(num_padded)
    kernel[0] = 0.25
    odd = (k.astype(np.int64) % 2) == 1
    kernel[odd] = -1.0 / (np.pi * k[odd]) ** 2
    response = np.real(scipy.fft.rfft(kernel))
    if window == 'hann':
        response = response * (0.5 + 0.5 * np.cos(2.0 * np.pi * scipy.fft.rfftfreq(num_padded)))
    return response


def angular_weights(angles):
    '''
    Angular footprint of each view on the half circle; pi/P for uniform views.
    '''
    if angles.size == 1:
        return np.array([np.pi])
    ext = np.concatenate([angles[-1:] - np.pi, angles, angles[:1] + np.pi])
    return 0.5 * (ext[2:] - ext[:-2])


def fbp(sinogram, side, window='ram_lak', pixel_size=1.0):
    '''
    Parameters:
        sinogram - Sinogram, any number of views >= 1
        side - output image pixels per edge
        window - 'ram_lak' or 'hann'
    Returns:
        Image reconstructed by filtered backprojection
    '''
    geometry = sinogram.geometry
    nDets = geometry.num_detectors
    nPad = _next_pow2(2 * nDets)
    response = ramp_filter(nPad, window)
    spectrum = scipy.fft.rfft(sinogram.responses, n=nPad, axis=1)
    filtered = scipy.fft.irfft(spectrum * response[None, :], n=nPad, axis=1)[:, :nDets]

    #   ramp to physical units (1/spacing), view weights (pi/P when uniform),
    #   then undo the backprojector's spacing/pixel-area density
    spacing = detector_spacing(geometry, side, pixel_size)
    weights = angular_weights(geometry.angles) / spacing
    density = spacing / pixel_size ** 2
    filtered = filtered * weights[:, None] * density
    return radon_adjoint(Sinogram(geometry, filtered), side, pixel_size)


def add_noise(sinogram, noise):
    '''
    Parameters:
        sinogram - clean Sinogram y, not all zero
        noise - NoiseSpec
    Returns:
        Sinogram y + e with white Gaussian e scaled so that
        20*log10(||y|| / ||e||) equals noise.input_snr_db
    '''
    y = sinogram.responses
    normY = np.linalg.norm(y)
    if normY == 0.0:
        raise InvalidArgumentError('input SNR is undefined for an all-zero sinogram')
    rng = np.random.default_rng(int(noise.seed))
    e = rng.standard_normal(y.shape)
    e *= normY / (np.linalg.norm(e) * 10.0 ** (noise.input_snr_db / 20.0))
    log.info('noise at %.1f dB input SNR, seed %d', noise.input_snr_db, noise.seed)
    return sinogram.with_responses(y + e)


def merge_sinograms(measured, synthesized):
    '''
    Combine measured views with synthesized ones: every measured view is kept,
    synthesized views fill the angles the measurements do not cover.
    Detector grids must agree.
    '''
    gm = measured.geometry
    gs = synthesized.geometry
    if not np.array_equal(gm.detector_positions, gs.detector_positions):
        raise InvalidArgumentError('cannot merge sinograms with different detector grids')
    keep = np.array([np.min(np.abs(gm.angles - a)) > ANGLE_MATCH_TOL for a in gs.angles],
                    dtype=bool)
    angles = np.concatenate([gm.angles, gs.angles[keep]])
    rows = np.concatenate([measured.responses, synthesized.responses[keep]])
    order = np.argsort(angles, kind='stable')
    geometry = Geometry(angles.size, gm.num_detectors, angles[order], gm.detector_positions)
    log.info('merged %d measured + %d synthesized views', gm.num_views, int(keep.sum()))
    return Sinogram(geometry, rows[order])
