#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
solvers.py

iterative reconstruction with an alpha-blended data fidelity:

    f(x) = (1 - alpha) g(x) + alpha g~(x) + h(x)
    g(x) = 1/2 ||A x - y||^2          measured views
    g~(x) = 1/2 ||A~ x - y~||^2       views synthesized by the neural field

FISTA with TV, gradient-method RED, and PnP-FISTA
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from coilct.denoisers import DenoiserSpec, denoise
from coilct.errors import InvalidArgumentError, SolverDivergedError
from coilct.geometry import Image
from coilct.tomo import Sinogram, system_matrix
from coilct.tv import prox_pixels, tv_norm, tv_prox, tv_value

log = logging.getLogger(__name__)

ALGORITHMS = ('fista_tv', 'gm_red', 'pnp_fista')
DIVERGENCE_FACTOR = 1e3
STEP_SAFETY = 0.9
POWER_ITERATIONS = 50
LOG_EVERY = 50

__all__ = ['DataFidelity', 'SolverConfig', 'grad_data', 'tv_value', 'tv_prox',
           'fista_tv', 'gm_red', 'pnp_fista', 'power_iteration', 'auto_step_size',
           'reconstruct', 'next_q']


@dataclass(frozen=True, eq=False)
class DataFidelity:
    '''
    measured - Sinogram y with geometry A
    coil - optional Sinogram y~ synthesized on geometry A~
    alpha - weight of the synthesized term, 0 when coil is absent
    side - if given, the image side every x must have
    '''
    measured: Sinogram
    coil: Optional[Sinogram] = None
    alpha: float = 0.0
    side: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError('alpha must lie in [0, 1], got %r' % (self.alpha,))
        if self.coil is None and self.alpha != 0.0:
            raise InvalidArgumentError('alpha must be 0 without a synthesized sinogram')

    def terms(self):
        '''
        (weight, sinogram) of every term with nonzero weight
        '''
        pairs = [(1.0 - self.alpha, self.measured)]
        if self.coil is not None:
            pairs.append((self.alpha, self.coil))
        return [(w, s) for w, s in pairs if w > 0.0]


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = 'fista_tv'
    step_size: float = 1e-3
    tv_weight: float = 0.0
    red_weight: float = 0.0
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    max_iters: int = 200
    stop_tol: float = 1e-6

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError('unknown algorithm %r' % (self.algorithm,))
        if not self.step_size > 0:
            raise InvalidArgumentError('step_size must be positive')
        if self.tv_weight < 0 or self.red_weight < 0:
            raise InvalidArgumentError('regularization weights must be nonnegative')
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidArgumentError('max_iters must be a positive integer')
        if self.stop_tol < 0:
            raise InvalidArgumentError('stop_tol must be nonnegative')


def _check_side(fidelity, x):
    if fidelity.side is not None and x.shape[0] != fidelity.side:
        raise InvalidArgumentError('image side %d does not match the fidelity side %d'
                                   % (x.shape[0], fidelity.side))


def _grad_pixels(fidelity, x, pixel_size):
    side = x.shape[0]
    grad = None
    for weight, sino in fidelity.terms():
        A = system_matrix(sino.geometry, side, pixel_size)
        term = A.T @ (A @ x.ravel() - sino.responses.ravel())
        grad = weight * term if grad is None else grad + weight * term
    return grad.reshape(side, side)


def _normal_pixels(fidelity, x, pixel_size):
    #   sum of w A^T A x over the weighted terms
    side = x.shape[0]
    out = None
    for weight, sino in fidelity.terms():
        A = system_matrix(sino.geometry, side, pixel_size)
        term = A.T @ (A @ x.ravel())
        out = weight * term if out is None else out + weight * term
    return out.reshape(side, side)


def _data_pixels(fidelity, x, pixel_size):
    side = x.shape[0]
    value = 0.0
    for weight, sino in fidelity.terms():
        A = system_matrix(sino.geometry, side, pixel_size)
        r = A @ x.ravel() - sino.responses.ravel()
        value += weight * 0.5 * float(np.dot(r, r))
    return value


def grad_data(fidelity, x):
    '''
    Parameters:
        fidelity - DataFidelity
        x - Image
    Returns:
        Image (1 - alpha) A^T (A x - y) + alpha A~^T (A~ x - y~)
    '''
    _check_side(fidelity, x.pixels)
    return x.with_pixels(_grad_pixels(fidelity, x.pixels, x.pixel_size))


def data_value(fidelity, x):
    _check_side(fidelity, x.pixels)
    return _data_pixels(fidelity, x.pixels, x.pixel_size)


def objective(fidelity, x, tau):
    '''
    Blended data fidelity plus tau * TV at the Image x.
    '''
    return data_value(fidelity, x) + tv_value(x, tau)


def next_q(q):
    return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * q * q))


def _relative_change(new, old):
    return np.linalg.norm(new - old) / max(np.linalg.norm(new), np.finfo(float).tiny)


def fista_tv(fidelity, config, x0):
    '''
    Parameters:
        fidelity - DataFidelity
        config - SolverConfig; step_size, tv_weight, max_iters, stop_tol are used
        x0 - starting Image
    Returns:
        last iterate, and the objective at x0 followed by the objective after
        every iteration
    '''
    _check_side(fidelity, x0.pixels)
    ps = x0.pixel_size
    gamma = config.step_size
    tau = config.tv_weight
    x = x0.pixels.copy()
    s = x.copy()
    q = 1.0

    def f(pixels):
        return _data_pixels(fidelity, pixels, ps) + tau * tv_norm(pixels)

    history = [f(x)]
    limit = DIVERGENCE_FACTOR * history[0]
    for it in range(config.max_iters):
        z = s - gamma * _grad_pixels(fidelity, s, ps)
        xNew = prox_pixels(z, gamma * tau) if tau > 0 else z
        qNew = next_q(q)
        s = xNew + ((q - 1.0) / qNew) * (xNew - x)
        change = _relative_change(xNew, x)
        x = xNew
        q = qNew
        value = f(x)
        history.append(value)
        if not np.isfinite(value) or (limit > 0 and value > limit):
            raise SolverDivergedError('fista_tv', gamma, it)
        if it % LOG_EVERY == 0:
            log.info('fista_tv %4d  objective %.6e', it, value)
        if change < config.stop_tol:
            break
    return Image(x, ps), np.array(history)


def gm_red(fidelity, config, x0):
    '''
    Parameters:
        fidelity - DataFidelity
        config - SolverConfig; step_size, red_weight, denoiser, max_iters, stop_tol
        x0 - starting Image
    Returns:
        last iterate, and the norm of the update direction
        (1-alpha) grad g + alpha grad g~ + tau (x - D(x)) at every iteration
    '''
    _check_side(fidelity, x0.pixels)
    ps = x0.pixel_size
    gamma = config.step_size
    tau = config.red_weight
    x = x0.pixels.copy()
    history = []
    for it in range(config.max_iters):
        direction = _grad_pixels(fidelity, x, ps)
        if tau > 0:
            direction = direction + tau * (x - denoise(config.denoiser, Image(x, ps)).pixels)
        residual = float(np.linalg.norm(direction))
        history.append(residual)
        if not np.isfinite(residual) or (history[0] > 0 and residual > DIVERGENCE_FACTOR * history[0]):
            raise SolverDivergedError('gm_red', gamma, it)
        xNew = x - gamma * direction
        change = _relative_change(xNew, x)
        x = xNew
        if it % LOG_EVERY == 0:
            log.info('gm_red %4d  residual %.6e', it, residual)
        if change < config.stop_tol:
            break
    return Image(x, ps), np.array(history)


def pnp_fista(fidelity, config, x0):
    '''
    Parameters:
        fidelity - DataFidelity
        config - SolverConfig; step_size, denoiser, max_iters, stop_tol
        x0 - starting Image
    Returns:
        last iterate x of
            x+ = D(s - gamma [(1-alpha) grad g(s) + alpha grad g~(s)])
            s+ = x+ + ((q+ - 1) / q+) (x+ - x)
    '''
    _check_side(fidelity, x0.pixels)
    ps = x0.pixel_size
    gamma = config.step_size
    x = x0.pixels.copy()
    s = x.copy()
    q = 1.0
    limit = DIVERGENCE_FACTOR * _data_pixels(fidelity, x, ps)
    for it in range(config.max_iters):
        z = s - gamma * _grad_pixels(fidelity, s, ps)
        xNew = denoise(config.denoiser, Image(z, ps)).pixels
        qNew = next_q(q)
        s = xNew + ((qNew - 1.0) / qNew) * (xNew - x)
        change = _relative_change(xNew, x)
        x = xNew
        q = qNew
        misfit = _data_pixels(fidelity, x, ps)
        if not np.isfinite(misfit) or (limit > 0 and misfit > limit):
            raise SolverDivergedError('pnp_fista', gamma, it)
        if it % LOG_EVERY == 0:
            log.info('pnp_fista %4d  data misfit %.6e', it, misfit)
        if change < config.stop_tol:
            break
    return Image(x, ps)


def power_iteration(fidelity, side, iters, seed=0, pixel_size=1.0):
    '''
    Parameters:
        fidelity - DataFidelity
        side - image pixels per edge
        iters - number of iterations, >= 10
    Returns:
        Rayleigh-quotient estimate of the largest eigenvalue of
        (1 - alpha) A^T A + alpha A~^T A~ from a seeded random start
    '''
    if int(iters) != iters or iters < 10:
        raise InvalidArgumentError('power iteration needs at least 10 iterations')
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((side, side))
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(int(iters)):
        w = _normal_pixels(fidelity, v, pixel_size)
        estimate = float(np.sum(v * w))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return estimate


def auto_step_size(fidelity, config, side, pixel_size=1.0):
    '''
    0.9 / L with L the power-iteration bound of the data term, plus
    2 * red_weight for gm_red (||I - D|| <= 2 for averaging denoisers).
    '''
    lipschitz = power_iteration(fidelity, side, POWER_ITERATIONS, pixel_size=pixel_size)
    if config.algorithm == 'gm_red':
        lipschitz += 2.0 * config.red_weight
    step = STEP_SAFETY / lipschitz
    log.info('%s: Lipschitz estimate %.6e, step size %.6e', config.algorithm, lipschitz, step)
    return step


def reconstruct(fidelity, config, x0):
    '''
    Run the solver named by config.algorithm and return its final Image.
    '''
    if config.algorithm == 'fista_tv':
        return fista_tv(fidelity, config, x0)[0]
    if config.algorithm == 'gm_red':
        return gm_red(fidelity, config, x0)[0]
    return pnp_fista(fidelity, config, x0)
