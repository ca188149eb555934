import pytest
import torch

from guidancelab.data import RingSpec
from guidancelab.default_config import get_default_config
from guidancelab.diffusion import build_schedule
from guidancelab.models import annealing_scheduler, denoiser, velocity_net
from guidancelab.utils import freeze_model, save_checkpoint


def pytest_addoption(parser):
    parser.addoption(
        '--runslow',
        action='store_true',
        default=False,
        help='run the Monte-Carlo acceptance experiments'
    )


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: trains backbones, opt-in')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def zero_params():
    """Returns a helper that sets every parameter of a model to zero."""

    def _zero(model):
        with torch.no_grad():
            for p in model.parameters():
                p.zero_()
        return model

    return _zero


@pytest.fixture
def spec():
    return RingSpec()


@pytest.fixture
def sched():
    return build_schedule('linear', T=10, beta_start=1e-4, beta_end=0.2)


@pytest.fixture
def dnet(sched):
    return freeze_model(denoiser(sched, hidden_dims=(8, 8), t_embed_dim=4, seed=3))


@pytest.fixture
def vnet():
    return freeze_model(velocity_net(hidden_dims=(8, 8), t_embed_dim=4, seed=5))


@pytest.fixture
def snet(sched):
    return annealing_scheduler(sched.T, 1.0, hidden_dims=(8, 8), seed=7)


@pytest.fixture
def tiny_cfg(tmp_path):
    """Config whose every training / sampling run finishes in a blink."""
    cfg = get_default_config()
    cfg.schedule.T = 10
    cfg.schedule.beta_end = 0.2
    for node in (cfg.backbone, cfg.flow):
        node.hidden_dims = [8, 8]
        node.t_embed_dim = 4
        node.num_samples = 200
        node.batch_size = 16
        node.steps = 3
        node.print_freq = 1
    cfg.flow.sample_steps = 10
    cfg.scheduler.hidden_dims = [8, 8]
    cfg.scheduler.num_samples = 200
    cfg.scheduler.steps = 2
    cfg.scheduler.accum_steps = 2
    cfg.scheduler.print_freq = 1
    cfg.scheduler.delta_draws = 200
    cfg.scheduler.flow_steps = 10
    cfg.sample.seeds = 3
    cfg.sample.threads = 1
    cfg.eval.heatmap_size = 5
    cfg.eval.whmap_size = 4
    return cfg


@pytest.fixture
def dnet_ckpt(tmp_path, dnet, tiny_cfg):
    from guidancelab.engine import backbone_meta
    fpath = str(tmp_path / 'ckpt' / 'denoiser.json')
    save_checkpoint(
        dnet.net, fpath, 'denoiser', backbone_meta(dnet, tiny_cfg.backbone)
    )
    return fpath


@pytest.fixture
def vnet_ckpt(tmp_path, vnet, tiny_cfg):
    from guidancelab.engine import backbone_meta
    fpath = str(tmp_path / 'ckpt' / 'velocity.json')
    save_checkpoint(vnet.net, fpath, 'velocity', backbone_meta(vnet, tiny_cfg.flow))
    return fpath


@pytest.fixture
def snet_ckpt(tmp_path, snet, dnet, tiny_cfg):
    from guidancelab.engine import scheduler_meta
    fpath = str(tmp_path / 'ckpt' / 'scheduler.json')
    save_checkpoint(
        snet.net, fpath, 'scheduler', scheduler_meta(snet, tiny_cfg, dnet)
    )
    return fpath
