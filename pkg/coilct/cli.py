#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
cli.py

command-line front end: phantom -> projection -> noise -> field training ->
field querying -> reconstruction -> metrics

    coilct simulate --config desk.cfg --output-dir out
    coilct train-field out/sino_noisy_P60_I40.coila
    coilct reconstruct out/sino_noisy_P60_I40.coila --field out/sino_noisy_P60_I40.coilnf \
        --method fista_tv --alpha 0.5
    coilct grid --jobs 4
"""

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from coilct.config import MethodRun, load_config, parse_overrides
from coilct.errors import CoilError, ConfigError, FormatError
from coilct.field import FFM_MODES, fit_sinogram_field, load_field, query_field, save_field
from coilct.geometry import Image, coordinates_of, make_geometry, make_shepp_logan
from coilct.metricsio import (MetricRecord, append_metrics_csv, file_checksum, fnv1a_64,
                              metrics_lines, read_array, snr_db, write_array, write_image_pgm)
from coilct.solvers import DataFidelity, auto_step_size, reconstruct
from coilct.tomo import NoiseSpec, Sinogram, add_noise, fbp, merge_sinograms, radon_forward

log = logging.getLogger(__name__)

MANIFEST = 'manifest.fnv'
CELL_METRICS = 'metrics.csv'


#   ---- file helpers

def read_sinogram(path):
    '''
    COILA1 (P, D) array as a Sinogram on the uniform half-circle geometry.
    '''
    values, dims = read_array(path)
    if len(dims) != 2:
        raise FormatError('rank', '%s holds a rank-%d array, expected a sinogram' % (path, len(dims)))
    return Sinogram(make_geometry(dims[0], dims[1]), values)


def read_image(path):
    values, dims = read_array(path)
    if len(dims) != 2 or dims[0] != dims[1]:
        raise FormatError('rank', '%s does not hold a square image' % path)
    return Image(values)


def write_sinogram(sinogram, path):
    write_array(sinogram.responses, sinogram.responses.shape, path)
    print('Wrote %s' % path)


def write_image(image, path, preview=True):
    write_array(image.pixels, image.pixels.shape, path)
    print('Wrote %s' % path)
    if preview:
        pgm = os.path.splitext(path)[0] + '.pgm'
        write_image_pgm(image, pgm, (0.0, 1.0))
        print('Wrote %s' % pgm)


def write_loss_csv(history, path):
    with open(path, 'w', newline='') as writer:
        writer.write('epoch,loss\n')
        writer.write(''.join('%d,%.9e\n' % (epoch, loss) for epoch, loss in enumerate(history)))
    print('Wrote %s' % path)


def cell_id(num_views, input_snr_db):
    return 'P%d_I%g' % (num_views, input_snr_db)


def cell_seeds(seed, num_views, input_snr_db):
    '''
    (noise seed, training seed) of one grid cell, independent of which other
    cells the grid holds.
    '''
    entropy = [int(seed), int(num_views), int(round(input_snr_db * 1000)) % 2**32]
    noiseSeed, trainSeed = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
    return int(noiseSeed), int(trainSeed)


def simulate_cell(config, phantom, num_views, input_snr_db):
    '''
    Returns:
        clean and noisy Sinogram of `phantom` with num_views views
    '''
    geometry = make_geometry(num_views, config.num_detectors)
    clean = radon_forward(phantom, geometry)
    noiseSeed, _ = cell_seeds(config.seed, num_views, input_snr_db)
    return clean, add_noise(clean, NoiseSpec(input_snr_db, noiseSeed))


def field_geometry(config):
    return make_geometry(config.field_views, config.num_detectors)


def synthesize(field, config):
    geometry = field_geometry(config)
    return query_field(field, coordinates_of(geometry), geometry)


def run_method(run, measured, coil, config):
    '''
    Parameters:
        run - MethodRun
        measured - measured Sinogram
        coil - Sinogram synthesized by the field on field_views views, or None
        config - ExperimentConfig
    Returns:
        reconstructed Image
    '''
    side = config.phantom_side
    if run.name == 'fbp':
        return fbp(measured, side, config.fbp_window)
    if coil is None and run.needs_field:
        raise ConfigError('%s needs a neural field' % run.label)
    if run.name == 'fbp_coil':
        return fbp(merge_sinograms(measured, coil), side, config.fbp_window)

    if run.alpha:
        #   measured views replace the synthesized ones at shared angles
        coil = merge_sinograms(measured, coil)
    settings = config.solvers[run.name]
    fidelity = DataFidelity(measured, coil, run.alpha, side)
    step = settings.step_size
    if step == 0.0:
        step = auto_step_size(fidelity, settings.solver_config(run.name, 1.0), side)
    x0 = fbp(measured, side, config.fbp_window)
    return reconstruct(fidelity, settings.solver_config(run.name, step), x0)


#   ---- subcommands

def cmd_simulate(args, config):
    os.makedirs(config.output_dir, exist_ok=True)
    phantom = make_shepp_logan(config.phantom_side)
    write_image(phantom, os.path.join(config.output_dir, 'phantom.coila'))
    for P in config.views_list:
        for I in config.snr_list_db:
            clean, noisy = simulate_cell(config, phantom, P, I)
            if I == config.snr_list_db[0]:
                write_sinogram(clean, os.path.join(config.output_dir, 'sino_clean_P%d.coila' % P))
            write_sinogram(noisy, os.path.join(config.output_dir, 'sino_noisy_%s.coila' % cell_id(P, I)))
    return 0


def cmd_train_field(args, config):
    measured = read_sinogram(args.sinogram)
    stem = os.path.splitext(args.out or args.sinogram)[0]
    train = replace(config.train, seed=config.seed)
    field, history = fit_sinogram_field(measured, config.ffm(), config.mlp(), train)
    save_field(field, stem + '.coilnf')
    print('Wrote %s' % (stem + '.coilnf'))
    write_loss_csv(history, stem + '_loss.csv')
    print('Trained %5d epochs, loss %.6e -> %.6e' % (history.size, history[0], history[-1]))
    return 0


def cmd_query_field(args, config):
    field = load_field(args.field)
    views = args.views or config.field_views
    geometry = make_geometry(views, args.detectors or config.num_detectors)
    out = args.out or os.path.splitext(args.field)[0] + '_P%d.coila' % views
    write_sinogram(query_field(field, coordinates_of(geometry), geometry), out)
    return 0


def cmd_reconstruct(args, config):
    if args.method in ('fbp', 'fbp_coil') and args.alpha is not None:
        raise ConfigError('%s takes no --alpha' % args.method)
    run = MethodRun(args.method, args.alpha)
    if run.needs_field and not args.field:
        raise ConfigError('%s needs --field' % run.label)

    #   images are reconstructed on a grid with one pixel per detector
    measured = read_sinogram(args.sinogram)
    config = replace(config, phantom_side=measured.geometry.num_detectors)
    coil = synthesize(load_field(args.field), config) if args.field else None
    start = time.perf_counter()
    image = run_method(run, measured, coil, config)
    elapsed = time.perf_counter() - start

    stem = os.path.splitext(args.sinogram)[0]
    out = args.out or '%s_%s.coila' % (stem, run.label.replace(':', '_a'))
    write_image(image, out)

    reference = args.reference or os.path.join(config.output_dir, 'phantom.coila')
    if os.path.exists(reference):
        quality = snr_db(image, read_image(reference))
    else:
        log.warning('no reference image at %s; SNR recorded as nan', reference)
        quality = float('nan')
    record = MetricRecord(args.experiment_id or os.path.basename(stem),
                          measured.geometry.num_views, args.input_snr if args.input_snr is not None else float('nan'),
                          run.name, run.alpha or 0.0, quality, elapsed)
    metrics = args.metrics or os.path.join(config.output_dir, 'metrics.csv')
    append_metrics_csv(record, metrics)
    print('%s: SNR %.2f dB in %.1f s, appended to %s' % (run.label, quality, elapsed, metrics))
    return 0


def cmd_evaluate(args, config):
    estimate, _ = read_array(args.estimate)
    reference, _ = read_array(args.reference)
    quality = snr_db(estimate, reference)
    print('SNR %.4f dB' % quality)
    if args.metrics:
        views = estimate.shape[0] if estimate.ndim == 2 else 0
        record = MetricRecord(args.experiment_id or os.path.basename(args.estimate), views,
                              args.input_snr if args.input_snr is not None else float('nan'),
                              args.method, 0.0, quality, 0.0)
        append_metrics_csv(record, args.metrics)
    return 0


#   ---- grid and ablation

def cell_fingerprint(config, num_views, input_snr_db):
    '''
    FNV-1a of the canonical text of every setting that shapes a cell's outputs.
    '''
    solvers = sorted((name, repr(settings)) for name, settings in config.solvers.items())
    canonical = repr([config.phantom_side, config.field_views, config.ffm_mode, config.L,
                      config.profile, repr(config.train), [run.label for run in config.methods],
                      solvers, config.fbp_window, int(num_views), float(input_snr_db),
                      cell_seeds(config.seed, num_views, input_snr_db)])
    return fnv1a_64(canonical.encode('utf-8'))


def _manifest_ok(cell_dir, fingerprint):
    path = os.path.join(cell_dir, MANIFEST)
    if not os.path.exists(path):
        return False
    with open(path, 'r') as reader:
        lines = reader.read().splitlines()
    if not lines or lines[0] != 'config %016x' % fingerprint:
        return False
    for line in lines[1:]:
        digest, name = line.split(None, 1)
        target = os.path.join(cell_dir, name.strip())
        if not os.path.exists(target) or '%016x' % file_checksum(target) != digest:
            return False
    return True


def _write_manifest(cell_dir, names, fingerprint):
    lines = ['config %016x\n' % fingerprint]
    lines += ['%016x  %s\n' % (file_checksum(os.path.join(cell_dir, n)), n) for n in sorted(names)]
    with open(os.path.join(cell_dir, MANIFEST), 'w') as writer:
        writer.write(''.join(lines))


def _data_rows(text):
    return ''.join(text.splitlines(keepends=True)[1:])


def run_cell(config, num_views, input_snr_db):
    '''
    Full pipeline for one (views, noise) cell in its own directory.
    Returns:
        (CSV text of the cell's rows without header, True if every method succeeded)
    '''
    name = cell_id(num_views, input_snr_db)
    cellDir = os.path.join(config.output_dir, name)
    fragment = os.path.join(cellDir, CELL_METRICS)
    fingerprint = cell_fingerprint(config, num_views, input_snr_db)
    if _manifest_ok(cellDir, fingerprint):
        log.info('%s: outputs match the manifest, skipping', name)
        with open(fragment, 'r') as reader:
            return _data_rows(reader.read()), True

    os.makedirs(cellDir, exist_ok=True)
    if os.path.exists(os.path.join(cellDir, MANIFEST)):
        log.info('%s: settings or outputs changed, running again', name)
        os.remove(os.path.join(cellDir, MANIFEST))
    written = []
    phantom = make_shepp_logan(config.phantom_side)
    _, measured = simulate_cell(config, phantom, num_views, input_snr_db)
    write_array(measured.responses, measured.responses.shape, os.path.join(cellDir, 'sino_noisy.coila'))
    written.append('sino_noisy.coila')

    ok = True
    coil = None
    if any(run.needs_field for run in config.methods):
        _, trainSeed = cell_seeds(config.seed, num_views, input_snr_db)
        try:
            field, history = fit_sinogram_field(measured, config.ffm(), config.mlp(),
                                                replace(config.train, seed=trainSeed))
            save_field(field, os.path.join(cellDir, 'field.coilnf'))
            coil = synthesize(field, config)
            write_array(coil.responses, coil.responses.shape, os.path.join(cellDir, 'coil.coila'))
            written += ['field.coilnf', 'coil.coila']
        except CoilError as err:
            log.error('%s: field training failed: %s', name, err)
            ok = False

    records = []
    for run in config.methods:
        start = time.perf_counter()
        quality = float('nan')
        try:
            image = run_method(run, measured, coil, config)
            quality = snr_db(image, phantom)
            out = 'recon_%s.coila' % run.label.replace(':', '_a')
            write_array(image.pixels, image.pixels.shape, os.path.join(cellDir, out))
            written.append(out)
        except CoilError as err:
            log.error('%s %s failed: %s', name, run.label, err)
            ok = False
        records.append(MetricRecord(name, num_views, input_snr_db, run.name, run.alpha or 0.0,
                                    quality, time.perf_counter() - start))

    text = metrics_lines(records)
    with open(fragment, 'w', newline='') as writer:
        writer.write(text)
    if ok:
        _write_manifest(cellDir, written + [CELL_METRICS], fingerprint)
    return _data_rows(text), ok


def _run_cell_star(job):
    return run_cell(*job)


def _map_cells(func, jobs, nJobs):
    if nJobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=nJobs) as pool:
            return list(pool.map(func, jobs))
    return [func(job) for job in jobs]


def _write_table(rows, path):
    tmp = path + '.tmp'
    with open(tmp, 'w', newline='') as writer:
        writer.write(metrics_lines([]) + ''.join(rows))
    os.replace(tmp, path)
    print('Wrote %s' % path)


def cmd_grid(args, config):
    os.makedirs(config.output_dir, exist_ok=True)
    jobs = [(config, P, I) for P in config.views_list for I in config.snr_list_db]
    results = _map_cells(_run_cell_star, jobs, args.jobs)
    _write_table([rows for rows, _ in results], os.path.join(config.output_dir, 'metrics.csv'))
    failed = sum(1 for _, ok in results if not ok)
    print('Ran %d cells x %d methods, %d cells failed' % (len(jobs), len(config.methods), failed))
    return 1 if failed else 0


def ablation_cell(config, num_views, input_snr_db):
    '''
    Fields differing only in FFM mode, each scored by the SNR of its
    synthesized field_views sinogram against the noiseless one.
    '''
    name = cell_id(num_views, input_snr_db)
    phantom = make_shepp_logan(config.phantom_side)
    _, measured = simulate_cell(config, phantom, num_views, input_snr_db)
    truth = radon_forward(phantom, field_geometry(config))
    _, trainSeed = cell_seeds(config.seed, num_views, input_snr_db)
    records = []
    ok = True
    for mode in FFM_MODES:
        start = time.perf_counter()
        quality = float('nan')
        try:
            field, _ = fit_sinogram_field(measured, config.ffm(mode), config.mlp(mode),
                                          replace(config.train, seed=trainSeed))
            quality = snr_db(synthesize(field, config), truth)
        except CoilError as err:
            log.error('%s ffm=%s failed: %s', name, mode, err)
            ok = False
        records.append(MetricRecord(name, num_views, input_snr_db, 'field_ffm_%s' % mode, 0.0,
                                    quality, time.perf_counter() - start))
    return _data_rows(metrics_lines(records)), ok


def _ablation_cell_star(job):
    return ablation_cell(*job)


def cmd_ffm_ablation(args, config):
    os.makedirs(config.output_dir, exist_ok=True)
    jobs = [(config, P, I) for P in config.views_list for I in config.snr_list_db]
    results = _map_cells(_ablation_cell_star, jobs, args.jobs)
    _write_table([rows for rows, _ in results], os.path.join(config.output_dir, 'ablation.csv'))
    failed = sum(1 for _, ok in results if not ok)
    return 1 if failed else 0


#   ---- argument parsing

def build_parser():
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument('--config', help='key = value configuration file')
    common.add_argument('--seed', type=int, help='master seed, unsigned 64-bit')
    common.add_argument('--output-dir', dest='output_dir', help='directory for all outputs')
    common.add_argument('--jobs', type=int, default=1, help='grid cells run in parallel')
    common.add_argument('-v', '--verbose', action='store_true', help='log progress at INFO')

    parser = argparse.ArgumentParser(prog='coilct', allow_abbrev=False,
                                     description='sparse-view CT with coordinate-based neural fields. '
                                                 'Any config key can be overridden as --dotted.key=value.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('simulate', parents=[common], allow_abbrev=False,
                       help='phantom, clean and noisy sinograms')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('train-field', parents=[common], allow_abbrev=False,
                       help='fit a neural field to a sinogram')
    p.add_argument('sinogram', help='COILA1 sinogram')
    p.add_argument('--out', help='output stem for the .coilnf field and _loss.csv')
    p.set_defaults(func=cmd_train_field)

    p = sub.add_parser('query-field', parents=[common], allow_abbrev=False,
                       help='synthesize a sinogram from a field')
    p.add_argument('field', help='COILNF1 field')
    p.add_argument('--views', type=int, help='views to synthesize (default field_views)')
    p.add_argument('--detectors', type=int, help='detectors per view (default phantom_side)')
    p.add_argument('--out', help='output COILA1 sinogram')
    p.set_defaults(func=cmd_query_field)

    p = sub.add_parser('reconstruct', parents=[common], allow_abbrev=False,
                       help='reconstruct an image from a sinogram')
    p.add_argument('sinogram', help='measured COILA1 sinogram')
    p.add_argument('--field', help='COILNF1 field for fbp_coil or alpha > 0')
    p.add_argument('--method', required=True, choices=('fbp', 'fbp_coil', 'fista_tv', 'gm_red', 'pnp_fista'))
    p.add_argument('--alpha', type=float, help='weight of the synthesized views')
    p.add_argument('--reference', help='reference image for the SNR (default <output-dir>/phantom.coila)')
    p.add_argument('--metrics', help='metrics CSV (default <output-dir>/metrics.csv)')
    p.add_argument('--experiment-id', dest='experiment_id')
    p.add_argument('--input-snr', dest='input_snr', type=float, help='input SNR recorded in the metrics row')
    p.add_argument('--out', help='output COILA1 image')
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser('grid', parents=[common], allow_abbrev=False,
                       help='every (views, noise, method) cell')
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser('ffm-ablation', parents=[common], allow_abbrev=False,
                       help='compare FFM modes by synthesized sinogram SNR')
    p.set_defaults(func=cmd_ffm_ablation)

    p = sub.add_parser('evaluate', parents=[common], allow_abbrev=False,
                       help='SNR of an array against a reference')
    p.add_argument('estimate')
    p.add_argument('reference')
    p.add_argument('--metrics', help='append the result to this metrics CSV')
    p.add_argument('--method', default='evaluate')
    p.add_argument('--experiment-id', dest='experiment_id')
    p.add_argument('--input-snr', dest='input_snr', type=float)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        overrides = parse_overrides(extra)
        if args.seed is not None:
            overrides['seed'] = str(args.seed)
        if args.output_dir is not None:
            overrides['output_dir'] = args.output_dir
        if args.jobs < 1:
            raise ConfigError('--jobs must be at least 1')
        config = load_config(args.config, overrides)
        return args.func(args, config)
    except (CoilError, OSError) as err:
        sys.exit('coilct %s: %s' % (args.command, err))


if __name__ == '__main__':
    sys.exit(main())
