#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
test_metricsio.py
"""

import numpy as np
import pytest

from coilct.errors import FormatError, InvalidArgumentError
from coilct.geometry import Image
from coilct.metricsio import (METRIC_FIELDS, MetricRecord, append_metrics_csv, array_from_bytes,
                              array_to_bytes, file_checksum, fnv1a_64, metrics_lines, read_array,
                              snr_db, write_array, write_image_pgm)


def record(method='fbp', snr=12.5):
    return MetricRecord('P60_I40', 60, 40.0, method, 0.0, snr, 1.25)


def test_snr_exact_match_is_infinite():
    x = np.arange(1.0, 10.0)
    assert snr_db(x, x) == float('inf')


def test_snr_zero_estimate_is_zero_db():
    assert snr_db(np.zeros(4), np.ones(4)) == pytest.approx(0.0, abs=1e-12)


def test_snr_twenty_db():
    ref = np.ones(100)
    assert snr_db(0.9 * ref, ref) == pytest.approx(20.0, abs=1e-9)


def test_snr_scale_invariant():
    rng = np.random.default_rng(2)
    ref = rng.standard_normal(50)
    est = ref + 0.1 * rng.standard_normal(50)
    assert snr_db(7.0 * est, 7.0 * ref) == pytest.approx(snr_db(est, ref), abs=1e-9)


def test_snr_accepts_images():
    ref = Image(np.eye(4))
    assert snr_db(Image(np.zeros((4, 4))), ref) == pytest.approx(0.0, abs=1e-12)


def test_snr_errors():
    with pytest.raises(InvalidArgumentError):
        snr_db(np.ones(3), np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        snr_db(np.ones(3), np.ones(4))


def test_pgm_bytes(tmp_path):
    path = tmp_path / 'x.pgm'
    write_image_pgm(np.array([[0.0, 0.5], [1.0, 0.25]]), path, window=(0.0, 1.0))
    data = path.read_bytes()
    header = b'P5\n2 2\n255\n'
    assert data.startswith(header)
    assert list(data[len(header):]) == [0, 128, 255, 64]


def test_pgm_clamps_outside_window(tmp_path):
    path = tmp_path / 'x.pgm'
    write_image_pgm(np.array([[-1.0, 2.0], [0.0, 1.0]]), path, window=(0.0, 1.0))
    assert list(path.read_bytes()[-4:]) == [0, 255, 0, 255]


def test_pgm_default_window(tmp_path):
    path = tmp_path / 'x.pgm'
    write_image_pgm(Image(np.array([[2.0, 3.0], [4.0, 4.0]])), path)
    assert list(path.read_bytes()[-4:]) == [0, 128, 255, 255]
    write_image_pgm(np.full((3, 3), 0.7), path)
    assert not any(path.read_bytes()[-9:])


def test_pgm_rejects_empty_window(tmp_path):
    with pytest.raises(InvalidArgumentError):
        write_image_pgm(np.zeros((2, 2)), tmp_path / 'x.pgm', window=(1.0, 1.0))


def test_array_round_trip_bits(tmp_path):
    rng = np.random.default_rng(9)
    values = rng.standard_normal(1000) * 10.0 ** rng.integers(-300, 300, 1000)
    values[:3] = [-0.0, 5e-324, -2.5e-310]
    path = tmp_path / 'a.coila'
    write_array(values.reshape(10, 100), (10, 100), path)
    back, dims = read_array(path)
    assert dims == (10, 100)
    assert back.tobytes() == values.tobytes()


def test_array_rank_zero():
    data = array_to_bytes(np.array(3.5), ())
    assert len(data) == 24
    values, dims = array_from_bytes(data)
    assert dims == ()
    assert float(values) == 3.5


def test_array_rejects_wrong_count():
    with pytest.raises(InvalidArgumentError):
        array_to_bytes(np.zeros(5), (2, 3))


@pytest.mark.parametrize('check', ['magic', 'version', 'truncated', 'trailing'])
def test_array_corruption(check):
    good = array_to_bytes(np.arange(6.0), (2, 3))
    bad = {
        'magic': b'X' + good[1:],
        'version': good[:8] + b'\x02' + good[9:],
        'truncated': good[:-1],
        'trailing': good + b'\x00',
    }[check]
    with pytest.raises(FormatError) as info:
        array_from_bytes(bad)
    assert info.value.check == check


def test_metrics_lines_text():
    text = metrics_lines([record(snr=float('inf'))])
    lines = text.splitlines()
    assert lines[0] == ','.join(METRIC_FIELDS)
    assert lines[1] == 'P60_I40,60,40,fbp,0,inf,1.25'


def test_append_metrics_csv(tmp_path):
    path = tmp_path / 'metrics.csv'
    append_metrics_csv(record(), path)
    assert len(path.read_text().splitlines()) == 2
    append_metrics_csv(record('fbp_coil', 15.0), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0] == 'experiment_id,num_views,input_snr_db,method,alpha,snr_db,wall_time_s'
    assert lines[2].split(',')[3] == 'fbp_coil'


def test_fnv_known_values(tmp_path):
    assert fnv1a_64(b'') == 0xcbf29ce484222325
    assert fnv1a_64(b'a') == 0xaf63dc4c8601ec8c
    path = tmp_path / 'a.bin'
    path.write_bytes(b'a')
    assert file_checksum(path) == 0xaf63dc4c8601ec8c
