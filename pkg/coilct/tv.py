#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
tv.py

isotropic total variation and its proximal operator

Forward differences with a replicated last row/column, so the gradient is
zero across the far boundary.
"""

import numpy as np

from coilct.errors import InvalidArgumentError
from coilct.geometry import Image

PROX_ITERATIONS = 30
PROX_STEP = 0.248


def gradient(x):
    '''
    Returns:
        (dx, dy) forward differences along columns and rows
    '''
    dx = np.zeros_like(x)
    dy = np.zeros_like(x)
    dx[:, :-1] = x[:, 1:] - x[:, :-1]
    dy[:-1, :] = x[1:, :] - x[:-1, :]
    return dx, dy


def divergence(px, py):
    '''
    Negative adjoint of gradient(): <gradient(x), p> = -<x, divergence(p)>
    '''
    px = px.copy()
    py = py.copy()
    px[:, -1] = 0.0
    py[-1, :] = 0.0
    div = px.copy()
    div[:, 1:] -= px[:, :-1]
    div += py
    div[1:, :] -= py[:-1, :]
    return div


def tv_norm(x):
    dx, dy = gradient(x)
    return float(np.sum(np.sqrt(dx * dx + dy * dy)))


def tv_value(x, tau):
    '''
    Parameters:
        x - Image
        tau - nonnegative weight
    Returns:
        tau * sum over pixels of sqrt(dx^2 + dy^2)
    '''
    if tau < 0:
        raise InvalidArgumentError('TV weight must be nonnegative')
    return tau * tv_norm(x.pixels)


def prox_pixels(x, mu, iterations=PROX_ITERATIONS, step=PROX_STEP):
    '''
    Dual projection iteration for argmin_z 1/2 ||z - x||^2 + mu TV(z) on a
    raw pixel array. Fixed iteration count, no early exit.
    '''
    if not mu > 0:
        raise InvalidArgumentError('prox weight mu must be positive')
    px = np.zeros_like(x)
    py = np.zeros_like(x)
    scaled = x / mu
    for _ in range(iterations):
        gx, gy = gradient(divergence(px, py) - scaled)
        norm = np.sqrt(gx * gx + gy * gy)
        denom = 1.0 + step * norm
        px = (px + step * gx) / denom
        py = (py + step * gy) / denom
    return x - mu * divergence(px, py)


def tv_prox(x, mu):
    '''
    Parameters:
        x - Image
        mu - positive prox weight
    Returns:
        Image, the approximate proximal point of mu*TV at x
    '''
    return Image(prox_pixels(x.pixels, mu), x.pixel_size)
