#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
geometry.py

image grids, parallel-beam acquisition geometries, normalised measurement
coordinates and the Shepp-Logan test phantom

Conventions:
    image row 0 is the top of the object (largest y), column 0 the left edge
    the image centre is the rotation centre
    detector span is the image diagonal, so no ray misses the image support
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from coilct.errors import InvalidArgumentError

log = logging.getLogger(__name__)

MIN_PHANTOM_SIDE = 16

#   modified (Toft) Shepp-Logan: value, semi-axis a, semi-axis b, x0, y0, rotation in degrees
SHEPP_LOGAN_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def _frozen(values):
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    '''
    Square grayscale image. `pixels` is held as a read-only (side, side) array;
    a flat array of side**2 values is accepted and reshaped row-major.
    '''
    pixels: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64)
        if arr.ndim == 1:
            side = int(round(np.sqrt(arr.size)))
            if side * side != arr.size:
                raise InvalidArgumentError('pixel count %d is not a square' % arr.size)
            arr = arr.reshape(side, side)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise InvalidArgumentError('image must be square, got shape %s' % (arr.shape,))
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError('image contains non-finite values')
        if not self.pixel_size > 0:
            raise InvalidArgumentError('pixel_size must be positive')
        arr.setflags(write=False)
        object.__setattr__(self, 'pixels', arr)

    @property
    def side(self):
        return self.pixels.shape[0]

    def with_pixels(self, pixels):
        return Image(pixels, self.pixel_size)


@dataclass(frozen=True, eq=False)
class Geometry:
    '''
    Parallel-beam acquisition geometry.

    angles              - P view angles in [0, pi), strictly increasing
    detector_positions  - D normalised sensor-plane locations l in [0, 1]
    '''
    num_views: int
    num_detectors: int
    angles: np.ndarray = field(repr=False)
    detector_positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        angles = _frozen(self.angles)
        positions = _frozen(self.detector_positions)
        if angles.shape != (self.num_views,) or self.num_views < 1:
            raise InvalidArgumentError('expected %d angles, got shape %s'
                                       % (self.num_views, angles.shape))
        if positions.shape != (self.num_detectors,) or self.num_detectors < 1:
            raise InvalidArgumentError('expected %d detector positions, got shape %s'
                                       % (self.num_detectors, positions.shape))
        if np.any(np.diff(angles) <= 0):
            raise InvalidArgumentError('angles must be strictly increasing')
        if angles[0] < 0 or angles[-1] >= np.pi:
            raise InvalidArgumentError('angles must lie in [0, pi)')
        if np.any(positions < 0) or np.any(positions > 1):
            raise InvalidArgumentError('detector positions must lie in [0, 1]')
        object.__setattr__(self, 'angles', angles)
        object.__setattr__(self, 'detector_positions', positions)


def make_geometry(num_views, num_detectors, angle_span='half_circle'):
    '''
    Parameters:
        num_views - number of view angles P, >= 1
        num_detectors - number of detector cells D, >= 2
        angle_span - only 'half_circle' ([0, pi)) is supported
    Returns:
        Geometry with angles i*pi/P and detector centres (j + 0.5)/D
    '''
    if angle_span != 'half_circle':
        raise InvalidArgumentError('unsupported angle span %r' % (angle_span,))
    if int(num_views) != num_views or num_views < 1:
        raise InvalidArgumentError('num_views must be a positive integer')
    if int(num_detectors) != num_detectors or num_detectors < 2:
        raise InvalidArgumentError('num_detectors must be an integer >= 2')
    nViews = int(num_views)
    nDets = int(num_detectors)
    angles = np.arange(nViews) * np.pi / nViews
    positions = (np.arange(nDets) + 0.5) / nDets
    return Geometry(nViews, nDets, angles, positions)


def coordinates_of(geometry):
    '''
    Parameters:
        geometry - Geometry
    Returns:
        (P*D, 2) array of (theta/pi, l) rows in view-major order
    '''
    theta = np.repeat(geometry.angles / np.pi, geometry.num_detectors)
    ell = np.tile(geometry.detector_positions, geometry.num_views)
    return np.column_stack([theta, ell])


def detector_span(side, pixel_size=1.0):
    return side * pixel_size * np.sqrt(2.0)


def detector_offsets(positions, side, pixel_size=1.0):
    '''
    Physical signed distance t from the rotation centre of every normalised
    detector position l.
    '''
    return (np.asarray(positions, dtype=np.float64) - 0.5) * detector_span(side, pixel_size)


def detector_spacing(geometry, side, pixel_size=1.0):
    return detector_span(side, pixel_size) / geometry.num_detectors


def pixel_centres(side):
    '''
    Normalised [-1, 1] coordinates of pixel centres: x grows with column,
    y grows upwards (row 0 is the top).
    '''
    x = (2.0 * np.arange(side) + 1.0) / side - 1.0
    y = 1.0 - (2.0 * np.arange(side) + 1.0) / side
    return np.meshgrid(x, y)


def make_shepp_logan(side):
    '''
    Parameters:
        side - pixels per edge, >= 16
    Returns:
        Image of the 10-ellipse modified Shepp-Logan phantom sampled at pixel
        centres, clamped to [0, 1]
    '''
    if int(side) != side or side < MIN_PHANTOM_SIDE:
        raise InvalidArgumentError('phantom side must be an integer >= %d' % MIN_PHANTOM_SIDE)
    X, Y = pixel_centres(int(side))
    phantom = np.zeros_like(X)
    for value, a, b, x0, y0, phi in SHEPP_LOGAN_ELLIPSES:
        c = np.cos(np.radians(phi))
        s = np.sin(np.radians(phi))
        u = (X - x0) * c + (Y - y0) * s
        w = -(X - x0) * s + (Y - y0) * c
        inside = (u * u) / (a * a) + (w * w) / (b * b) <= 1.0
        phantom[inside] += value
    np.clip(phantom, 0.0, 1.0, out=phantom)
    log.info('Shepp-Logan phantom, side %d', side)
    return Image(phantom)
