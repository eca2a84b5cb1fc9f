#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
test_denoisers.py
"""

import numpy as np
import pytest

from coilct.denoisers import DenoiserSpec, denoise, gaussian_kernel
from coilct.errors import InvalidArgumentError
from coilct.geometry import Image
from coilct.solvers import tv_prox


def test_identity_returns_input():
    x = Image(np.random.default_rng(0).standard_normal((9, 9)))
    out = denoise(DenoiserSpec('identity', 3.0), x)
    assert np.array_equal(out.pixels, x.pixels)


def test_gaussian_keeps_constant():
    x = Image(np.full((12, 12), 0.3))
    np.testing.assert_allclose(denoise(DenoiserSpec('gaussian', 1.5), x).pixels, 0.3, rtol=1e-14)


def test_gaussian_impulse_centre():
    x = np.zeros((9, 9))
    x[4, 4] = 1.0
    out = denoise(DenoiserSpec('gaussian', 1.0), Image(x)).pixels
    w = np.exp(-0.5 * np.arange(-3, 4) ** 2)
    centre = (1.0 / w.sum()) ** 2
    assert out[4, 4] == pytest.approx(centre, rel=1e-12)


def test_gaussian_kernel_radius():
    assert gaussian_kernel(1.0).size == 7
    assert gaussian_kernel(0.4).size == 5
    assert gaussian_kernel(2.5).sum() == pytest.approx(1.0, rel=1e-14)


def test_gaussian_preserves_mean_of_interior_image():
    x = np.zeros((32, 32))
    x[10:22, 8:20] = np.random.default_rng(3).uniform(0, 1, (12, 12))
    out = denoise(DenoiserSpec('gaussian', 1.0), Image(x)).pixels
    assert abs(out.mean() - x.mean()) < 1e-10


def test_gaussian_is_nonexpansive():
    rng = np.random.default_rng(4)
    spec = DenoiserSpec('gaussian', 1.2)
    for _ in range(10):
        a = rng.standard_normal((16, 16))
        b = rng.standard_normal((16, 16))
        diff = denoise(spec, Image(a)).pixels - denoise(spec, Image(b)).pixels
        assert np.linalg.norm(diff) <= np.linalg.norm(a - b)


def test_zero_sigma_is_identity():
    x = Image(np.random.default_rng(5).standard_normal((6, 6)))
    for kind in ('gaussian', 'tv'):
        assert np.array_equal(denoise(DenoiserSpec(kind, 0.0), x).pixels, x.pixels)


def test_tv_denoiser_matches_prox():
    x = Image(np.random.default_rng(6).uniform(0, 1, (10, 10)))
    assert np.array_equal(denoise(DenoiserSpec('tv', 0.1), x).pixels, tv_prox(x, 0.1).pixels)


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        DenoiserSpec('bm3d', 1.0)
    with pytest.raises(InvalidArgumentError):
        DenoiserSpec('gaussian', -1.0)
