#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
metricsio.py

SNR metric, PGM previews, the COILA1 array container and the metrics CSV
"""

import csv
import io
import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from coilct.errors import FormatError, InvalidArgumentError

log = logging.getLogger(__name__)

ARRAY_MAGIC = b'COILA1\x00\x00'
ARRAY_VERSION = 1
METRIC_FIELDS = ('experiment_id', 'num_views', 'input_snr_db', 'method',
                 'alpha', 'snr_db', 'wall_time_s')


def _values(x):
    for attr in ('pixels', 'responses'):
        if hasattr(x, attr):
            return getattr(x, attr)
    return np.asarray(x, dtype=np.float64)


def snr_db(estimate, reference):
    '''
    Parameters:
        estimate - Image, Sinogram or array
        reference - same kind and shape, not all zero
    Returns:
        20*log10(||reference|| / ||reference - estimate||); +inf for an exact match
    '''
    est = _values(estimate)
    ref = _values(reference)
    if est.shape != ref.shape:
        raise InvalidArgumentError('shape mismatch: %s vs %s' % (est.shape, ref.shape))
    normRef = np.linalg.norm(ref)
    if normRef == 0.0:
        raise InvalidArgumentError('SNR against an all-zero reference is undefined')
    normDiff = np.linalg.norm(ref - est)
    if normDiff == 0.0:
        return float('inf')
    return float(20.0 * np.log10(normRef / normDiff))


def write_image_pgm(x, path, window=None):
    '''
    Parameters:
        x - Image
        path - output filename
        window - optional (lo, hi) mapped onto 0..255; default is the image range
    Binary P5 greymap, one byte per pixel, round half up with clamping.
    A constant image under the default window is written as all zeros.
    '''
    pixels = _values(x)
    if window is None:
        lo, hi = float(pixels.min()), float(pixels.max())
        degenerate = not hi > lo
    else:
        lo, hi = float(window[0]), float(window[1])
        if not hi > lo:
            raise InvalidArgumentError('PGM window needs hi > lo, got (%g, %g)' % (lo, hi))
        degenerate = False
    if degenerate:
        data = np.zeros(pixels.shape, dtype=np.uint8)
    else:
        scaled = np.floor((pixels - lo) / (hi - lo) * 255.0 + 0.5)
        data = np.clip(scaled, 0, 255).astype(np.uint8)
    nRows, nCols = data.shape
    with open(path, 'wb') as writer:
        writer.write(b'P5\n%d %d\n255\n' % (nCols, nRows))
        writer.write(data.tobytes())
    log.info('wrote %dx%d greymap %s', nCols, nRows, path)


def array_to_bytes(values, dims):
    dims = [int(d) for d in dims]
    if any(d < 0 for d in dims):
        raise InvalidArgumentError('array dimensions must be nonnegative')
    flat = np.ascontiguousarray(values, dtype='<f8').ravel()
    if flat.size != int(np.prod(dims, dtype=np.int64)):
        raise InvalidArgumentError('%d values do not fill dims %s' % (flat.size, dims))
    header = ARRAY_MAGIC + struct.pack('<II', ARRAY_VERSION, len(dims))
    header += struct.pack('<%dI' % len(dims), *dims)
    return header + flat.tobytes()


def array_from_bytes(data):
    '''
    Inverse of array_to_bytes; returns (values, dims) with values shaped by dims.
    '''
    if len(data) < len(ARRAY_MAGIC) or data[:len(ARRAY_MAGIC)] != ARRAY_MAGIC:
        raise FormatError('magic', 'not a COILA1 array')
    pos = len(ARRAY_MAGIC)
    if len(data) < pos + 8:
        raise FormatError('truncated', 'header ends early')
    version, rank = struct.unpack_from('<II', data, pos)
    pos += 8
    if version != ARRAY_VERSION:
        raise FormatError('version', 'unsupported COILA1 version %d' % version)
    if len(data) < pos + 4 * rank:
        raise FormatError('truncated', 'dimension list ends early')
    dims = tuple(struct.unpack_from('<%dI' % rank, data, pos))
    pos += 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) < pos + 8 * count:
        raise FormatError('truncated', 'expected %d values' % count)
    if len(data) > pos + 8 * count:
        raise FormatError('trailing', '%d bytes after the values' % (len(data) - pos - 8 * count))
    values = np.frombuffer(data, dtype='<f8', count=count, offset=pos).astype(np.float64)
    return values.reshape(dims), dims


def write_array(values, dims, path):
    data = array_to_bytes(values, dims)
    with open(path, 'wb') as writer:
        writer.write(data)
    log.info('wrote array %s to %s', tuple(dims), path)


def read_array(path):
    with open(path, 'rb') as reader:
        return array_from_bytes(reader.read())


@dataclass(frozen=True)
class MetricRecord:
    experiment_id: str
    num_views: int
    input_snr_db: float
    method: str
    alpha: float
    snr_db: float
    wall_time_s: float

    def row(self):
        return [self.experiment_id, '%d' % self.num_views, _real(self.input_snr_db),
                self.method, _real(self.alpha), _real(self.snr_db), _real(self.wall_time_s)]


def _real(value):
    #   %-formatting ignores the locale; inf and nan print as 'inf', 'nan'
    return '%.6g' % value


def metrics_lines(records, header=True):
    '''
    Returns:
        CSV text for `records`, header first when requested
    '''
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    if header:
        writer.writerow(METRIC_FIELDS)
    for record in records:
        writer.writerow(record.row())
    return buffer.getvalue()


def append_metrics_csv(record, path):
    '''
    Append one MetricRecord to `path`, writing the header first when the file
    is new or empty. The row goes out in a single write call.
    '''
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    text = metrics_lines([record], header=fresh)
    with open(path, 'a', newline='') as writer:
        writer.write(text)
    log.info('%s: %s %s alpha=%g snr=%s dB', path, record.experiment_id,
             record.method, record.alpha, _real(record.snr_db))


FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3
FNV_MASK = 0xffffffffffffffff


def fnv1a_64(data):
    '''
    64-bit FNV-1a hash of a bytes object.
    '''
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & FNV_MASK
    return h


def file_checksum(path):
    with open(path, 'rb') as reader:
        return fnv1a_64(reader.read())
