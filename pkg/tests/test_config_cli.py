#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
test_config_cli.py

configuration parsing and the coilct command line, on tiny problems
"""

import os
from dataclasses import fields

import numpy as np
import pytest

from coilct.cli import cell_seeds, field_geometry, main, run_method, simulate_cell
from coilct.config import (ExperimentConfig, MethodRun, build_config, load_config, parse_methods,
                           parse_overrides)
from coilct.errors import ConfigError
from coilct.field import TrainConfig, full_mlp
from coilct.geometry import make_shepp_logan
from coilct.metricsio import read_array
from coilct.solvers import DataFidelity, reconstruct
from coilct.tomo import Sinogram, fbp, merge_sinograms

TINY = ['--phantom_side=16', '--views_list=8', '--snr_list_db=40', '--field_views=16',
        '--train.epochs=3', '--train.batch_size=32', '--fista_tv.max_iters=5']


def run_cli(command, out, *extra):
    return main([command, '--output-dir', str(out)] + TINY + list(extra))


CONFIG_TEXT = '''
# small experiment
phantom_side = 32
views_list = 10, 20     # two settings
snr_list_db = 30,40
methods = fbp, fista_tv:0.5
fista_tv.tv_weight = 0.2
gm_red.denoiser.kind = tv
train.epochs = 5
fbp.window = hann
'''


def test_load_config_file(tmp_path):
    path = tmp_path / 'exp.cfg'
    path.write_text(CONFIG_TEXT)
    config = load_config(str(path))
    assert config.phantom_side == 32
    assert config.views_list == (10, 20)
    assert config.snr_list_db == (30.0, 40.0)
    assert [run.label for run in config.methods] == ['fbp', 'fista_tv:0.5']
    assert config.solvers['fista_tv'].tv_weight == 0.2
    assert config.solvers['gm_red'].denoiser.kind == 'tv'
    assert config.solvers['gm_red'].red_weight == 50.0
    assert config.train.epochs == 5
    assert config.train.batch_size == 128
    assert config.fbp_window == 'hann'


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / 'exp.cfg'
    path.write_text(CONFIG_TEXT)
    config = load_config(str(path), {'phantom_side': '48', 'train.epochs': '7'})
    assert config.phantom_side == 48
    assert config.train.epochs == 7


def test_defaults():
    config = load_config()
    assert config.profile == 'desk'
    assert config.views_list == (60, 90, 120)
    assert config.field_views == 360
    assert len(config.methods) == 8
    assert config.num_detectors == 64


def test_full_profile():
    config = build_config({'profile': 'full'})
    assert config.train == TrainConfig()
    assert config.mlp() == full_mlp(40)
    assert config.mlp('none').input_dim == 2


@pytest.mark.parametrize('pairs', [
    {'no_such_key': '1'},
    {'fista_tv.bogus': '1'},
    {'fbp.tv_weight': '1'},
    {'phantom_side': 'abc'},
    {'views_list': '60,400', 'field_views': '360'},
    {'ffm_mode': 'gaussian'},
    {'profile': 'laptop'},
    {'fbp.window': 'cosine'},
    {'gm_red.denoiser.kind': 'bm3d'},
    {'train.lr_decay_per_epoch': '1.5'},
    {'train.decay': '0.9'},
    {'train.adam_beta1': '1.0'},
])
def test_bad_config(pairs):
    with pytest.raises(ConfigError):
        build_config(pairs)


def test_every_train_field_is_a_key():
    values = ['0.002', '0.95', '7', '64', '0.8', '0.99', '1e-7', '5']
    pairs = {'train.%s' % f.name: value for f, value in zip(fields(TrainConfig), values)}
    assert len(pairs) == len(fields(TrainConfig))
    assert build_config(pairs).train == TrainConfig(0.002, 0.95, 7, 64, 0.8, 0.99, 1e-7, 5)


def test_config_file_syntax_error():
    from coilct.config import parse_config_text
    with pytest.raises(ConfigError):
        parse_config_text('phantom_side 64')
    assert parse_config_text('a = 1\na = 2  # later wins') == {'a': '2'}


def test_parse_overrides():
    assert parse_overrides(['--a.b', '1', '--c=2']) == {'a.b': '1', 'c': '2'}
    with pytest.raises(ConfigError):
        parse_overrides(['stray'])
    with pytest.raises(ConfigError):
        parse_overrides(['--dangling'])


def test_method_runs():
    runs = parse_methods('fbp, fbp_coil, gm_red, pnp_fista:0.25')
    assert [run.label for run in runs] == ['fbp', 'fbp_coil', 'gm_red', 'pnp_fista:0.25']
    assert [run.needs_field for run in runs] == [False, True, False, True]
    assert runs[2].alpha == 0.0
    with pytest.raises(ConfigError):
        MethodRun('fbp', 0.5)
    with pytest.raises(ConfigError):
        parse_methods('fista_tv:1.5')
    with pytest.raises(ConfigError):
        parse_methods('art')
    with pytest.raises(ConfigError):
        parse_methods(' , ')


def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(views_list=(60, 90), field_views=60)
    with pytest.raises(ConfigError):
        ExperimentConfig(phantom_side=8)


def test_cell_seeds():
    assert cell_seeds(0, 60, 40.0) == cell_seeds(0, 60, 40.0)
    assert cell_seeds(0, 60, 40.0) != cell_seeds(0, 60, 30.0)
    assert cell_seeds(0, 60, 40.0) != cell_seeds(1, 60, 40.0)
    noiseSeed, trainSeed = cell_seeds(0, 60, 40.0)
    assert noiseSeed != trainSeed


def test_blended_methods_keep_measured_views():
    config = build_config({'phantom_side': '16', 'views_list': '8', 'field_views': '16',
                           'fista_tv.max_iters': '5', 'fista_tv.step_size': '1e-3'})
    _, measured = simulate_cell(config, make_shepp_logan(16), 8, 40.0)
    coil = Sinogram(field_geometry(config), np.zeros((16, 16)))
    anchored = merge_sinograms(measured, coil)
    assert np.array_equal(anchored.responses[::2], measured.responses)

    solver = config.solvers['fista_tv'].solver_config('fista_tv', 1e-3)
    x0 = fbp(measured, 16)
    image = run_method(MethodRun('fista_tv', 1.0), measured, coil, config)
    expected = reconstruct(DataFidelity(measured, anchored, 1.0, 16), solver, x0)
    raw = reconstruct(DataFidelity(measured, coil, 1.0, 16), solver, x0)
    assert np.array_equal(image.pixels, expected.pixels)
    assert not np.array_equal(image.pixels, raw.pixels)


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / 'out'
    assert run_cli('simulate', out) == 0
    names = sorted(os.listdir(out))
    assert names == ['phantom.coila', 'phantom.pgm', 'sino_clean_P8.coila', 'sino_noisy_P8_I40.coila']
    values, dims = read_array(str(out / 'sino_noisy_P8_I40.coila'))
    assert dims == (8, 16)
    first = (out / 'sino_noisy_P8_I40.coila').read_bytes()
    run_cli('simulate', out)
    assert (out / 'sino_noisy_P8_I40.coila').read_bytes() == first


def test_simulate_rejects_short_field_views(tmp_path):
    out = tmp_path / 'out'
    with pytest.raises(SystemExit):
        run_cli('simulate', out, '--field_views=4')
    assert not out.exists()


def test_unknown_override_exits(tmp_path):
    with pytest.raises(SystemExit):
        run_cli('simulate', tmp_path / 'out', '--phantom-size=32')


def test_train_field(tmp_path):
    out = tmp_path / 'out'
    run_cli('simulate', out)
    sino = str(out / 'sino_noisy_P8_I40.coila')
    assert run_cli('train-field', out, sino, '--out', str(out / 'a')) == 0
    run_cli('train-field', out, sino, '--out', str(out / 'b'))
    lines = (out / 'a_loss.csv').read_text().splitlines()
    assert lines[0] == 'epoch,loss'
    assert len(lines) == 1 + 3
    assert (out / 'a.coilnf').read_bytes() == (out / 'b.coilnf').read_bytes()

    assert run_cli('query-field', out, str(out / 'a.coilnf'), '--views', '12') == 0
    _, dims = read_array(str(out / 'a_P12.coila'))
    assert dims == (12, 16)


def test_reconstruct_rejects_alpha_for_fbp(tmp_path):
    with pytest.raises(SystemExit):
        run_cli('reconstruct', tmp_path, str(tmp_path / 'missing.coila'),
                '--method', 'fbp', '--alpha', '0.5')


def test_reconstruct_needs_field(tmp_path):
    out = tmp_path / 'out'
    run_cli('simulate', out)
    with pytest.raises(SystemExit):
        run_cli('reconstruct', out, str(out / 'sino_noisy_P8_I40.coila'),
                '--method', 'fista_tv', '--alpha', '0.5')


def test_reconstruct_alpha_zero_ignores_field(tmp_path):
    out = tmp_path / 'out'
    run_cli('simulate', out)
    sino = str(out / 'sino_noisy_P8_I40.coila')
    run_cli('train-field', out, sino)
    field = str(out / 'sino_noisy_P8_I40.coilnf')
    assert run_cli('reconstruct', out, sino, '--method', 'fista_tv',
                   '--out', str(out / 'plain.coila')) == 0
    assert run_cli('reconstruct', out, sino, '--method', 'fista_tv', '--alpha', '0',
                   '--field', field, '--out', str(out / 'with_field.coila')) == 0
    assert (out / 'plain.coila').read_bytes() == (out / 'with_field.coila').read_bytes()
    assert (out / 'plain.pgm').exists()

    lines = (out / 'metrics.csv').read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].split(',')[3] == 'fista_tv'
    assert lines[1].split(',')[5] != 'nan'


def test_evaluate(tmp_path, capsys):
    out = tmp_path / 'out'
    run_cli('simulate', out)
    phantom = str(out / 'phantom.coila')
    assert run_cli('evaluate', out, phantom, phantom) == 0
    assert 'SNR inf dB' in capsys.readouterr().out


def test_grid_and_resume(tmp_path):
    out = tmp_path / 'out'
    assert run_cli('grid', out, '--methods=fbp,fbp_coil') == 0
    first = (out / 'metrics.csv').read_text().splitlines()
    assert len(first) == 3
    assert [line.split(',')[3] for line in first[1:]] == ['fbp', 'fbp_coil']
    assert (out / 'P8_I40' / 'manifest.fnv').exists()

    assert run_cli('grid', out, '--methods=fbp,fbp_coil') == 0
    second = (out / 'metrics.csv').read_text().splitlines()
    assert [line.rsplit(',', 1)[0] for line in second] == [line.rsplit(',', 1)[0] for line in first]


def test_grid_reruns_tampered_cell(tmp_path):
    out = tmp_path / 'out'
    run_cli('grid', out, '--methods=fbp')
    recon = out / 'P8_I40' / 'recon_fbp.coila'
    good = recon.read_bytes()
    recon.write_bytes(good[:-8])
    run_cli('grid', out, '--methods=fbp')
    assert recon.read_bytes() == good


def test_grid_reruns_cell_when_settings_change(tmp_path):
    out = tmp_path / 'out'
    assert run_cli('grid', out, '--methods=fbp,fbp_coil') == 0
    assert (out / 'P8_I40' / 'manifest.fnv').read_text().startswith('config ')
    assert run_cli('grid', out, '--methods=fbp') == 0
    lines = (out / 'metrics.csv').read_text().splitlines()
    assert [line.split(',')[3] for line in lines[1:]] == ['fbp']

    run_cli('grid', out, '--methods=fbp', '--seed=1')
    run_cli('grid', out, '--methods=fbp', '--seed=2')
    fresh = tmp_path / 'fresh'
    run_cli('grid', fresh, '--methods=fbp', '--seed=2')
    for name in ('sino_noisy.coila', 'recon_fbp.coila'):
        assert (out / 'P8_I40' / name).read_bytes() == (fresh / 'P8_I40' / name).read_bytes()


def test_grid_reports_failed_cells(tmp_path):
    out = tmp_path / 'out'
    assert run_cli('grid', out, '--methods=fbp,fbp_coil', '--train.initial_lr=1e300') == 1
    rows = [line.split(',') for line in (out / 'metrics.csv').read_text().splitlines()[1:]]
    assert [row[3] for row in rows] == ['fbp', 'fbp_coil']
    assert rows[0][5] != 'nan'
    assert rows[1][5] == 'nan'
    assert not (out / 'P8_I40' / 'manifest.fnv').exists()

    assert run_cli('grid', out, '--methods=fbp,fbp_coil') == 0
    rows = [line.split(',') for line in (out / 'metrics.csv').read_text().splitlines()[1:]]
    assert all(row[5] != 'nan' for row in rows)


def test_ffm_ablation(tmp_path):
    out = tmp_path / 'out'
    assert run_cli('ffm-ablation', out) == 0
    lines = (out / 'ablation.csv').read_text().splitlines()
    assert len(lines) == 4
    assert [line.split(',')[3] for line in lines[1:]] == [
        'field_ffm_none', 'field_ffm_positional', 'field_ffm_linear']
    assert all(line.split(',')[5] != 'nan' for line in lines[1:])
