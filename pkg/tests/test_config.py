import glob
import math
import os.path as osp
import pytest

from guidancelab.default_config import (
    ablation_kwargs, get_default_config, load_config, metric_kwargs,
    optimizer_kwargs, schedule_kwargs
)

CONFIG_DIR = osp.join(osp.dirname(osp.dirname(osp.abspath(__file__))), 'configs')


def test_defaults():
    cfg = get_default_config()
    assert cfg.schedule.T == 50
    assert cfg.scheduler.hidden_dims == [128, 128, 128]
    assert cfg.scheduler.lr == 1e-3 and cfg.scheduler.weight_decay == 0.01
    assert cfg.perturb.s == 0.025
    assert cfg.sample.c == pytest.approx(3 * math.pi / 4)
    assert cfg.eval.tol == pytest.approx(math.pi / 64)


def test_kwargs_helpers():
    cfg = get_default_config()
    assert schedule_kwargs(cfg)['T'] == 50
    assert optimizer_kwargs(cfg.backbone) == {
        'optim': 'adamw',
        'lr': 1e-3,
        'weight_decay': 0.01
    }
    assert ablation_kwargs(cfg)['use_t'] and not ablation_kwargs(cfg)['constrain_w']
    assert metric_kwargs(cfg)['n_bins'] == 16


def test_json_integers_fill_float_keys(tmp_path):
    fpath = tmp_path / 'cfg.json'
    fpath.write_text('{"sample": {"w": 1, "seeds": 5}, "ring": {"mu_r": 2}}')
    cfg = load_config(str(fpath))
    assert isinstance(cfg.sample.w, float) and cfg.sample.w == 1.
    assert cfg.sample.seeds == 5
    assert cfg.ring.mu_r == 2.


def test_command_line_overrides():
    cfg = load_config(opts=['scheduler.steps', '100', 'sample.w', '2', 'sample.mode', 'cfg'])
    assert cfg.scheduler.steps == 100
    assert cfg.sample.w == 2.
    assert cfg.sample.mode == 'cfg'


@pytest.mark.parametrize(
    'opts', [['sample.colour', '1'], ['sample.w', 'high'], ['sample.w']]
)
def test_invalid_overrides(opts):
    with pytest.raises(ValueError):
        load_config(opts=opts)


def test_invalid_file_key(tmp_path):
    fpath = tmp_path / 'cfg.json'
    fpath.write_text('{"scheduler": {"depth": 3}}')
    with pytest.raises(ValueError):
        load_config(str(fpath))


@pytest.mark.parametrize(
    'fpath', sorted(glob.glob(osp.join(CONFIG_DIR, '*.json')))
)
def test_shipped_configs_load(fpath):
    cfg = load_config(fpath)
    assert cfg.schedule.T >= 1


def test_shipped_sweeps():
    cfg = load_config(osp.join(CONFIG_DIR, 'sweep_baselines.json'))
    assert [v['mode'] for v in cfg.sweep.variants] == ['cfg', 'cfgpp', 'cfgpp', 'anneal']
    cfg = load_config(osp.join(CONFIG_DIR, 'sweep_ablation.json'))
    assert cfg.sweep.preset == 'ablation'
