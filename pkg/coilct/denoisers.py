#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
denoisers.py

pluggable image denoisers D_sigma for regularization by denoising and
plug-and-play reconstruction
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from coilct.errors import InvalidArgumentError
from coilct.tv import tv_prox

DENOISER_KINDS = ('identity', 'gaussian', 'tv')


@dataclass(frozen=True)
class DenoiserSpec:
    '''
    kind - 'identity', 'gaussian' (sigma = kernel width in pixels) or
           'tv' (sigma = TV prox weight)
    '''
    kind: str = 'gaussian'
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in DENOISER_KINDS:
            raise InvalidArgumentError('unknown denoiser %r' % (self.kind,))
        if not self.sigma >= 0:
            raise InvalidArgumentError('denoiser sigma must be nonnegative')


def gaussian_kernel(sigma):
    '''
    Normalised 1-D Gaussian truncated at radius ceil(3 sigma).
    The 2-D kernel is its outer product with itself.
    '''
    radius = int(np.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (k / sigma) ** 2)
    return kernel / kernel.sum()


def denoise(spec, x):
    '''
    Parameters:
        spec - DenoiserSpec
        x - Image
    Returns:
        D_sigma(x) as an Image; the input itself for the identity denoiser
    '''
    if spec.kind == 'identity':
        return x
    if spec.kind == 'gaussian':
        if spec.sigma == 0:
            return x
        kernel = gaussian_kernel(spec.sigma)
        out = correlate1d(x.pixels, kernel, axis=0, mode='nearest')
        out = correlate1d(out, kernel, axis=1, mode='nearest')
        return x.with_pixels(out)
    if spec.sigma == 0:
        return x
    return tv_prox(x, spec.sigma)
