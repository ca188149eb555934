"""End-to-end experiments on trained toy models.

These train real backbones and schedulers and take minutes on a CPU; run
them with ``pytest --runslow``.
"""
import math
import pytest
import torch

from guidancelab.data import RingDataManager, angular_distance
from guidancelab.default_config import get_default_config
from guidancelab.engine import (
    VelocityEngine, train_denoiser, train_flow_scheduler, train_scheduler,
    train_velocity
)
from guidancelab.evaluation import RunConfig, evaluate_models
from guidancelab.metrics import (
    annulus_argmin, default_w_grids, delta_norm_heatmap, endpoint_angles,
    on_manifold_rate, w_heatmap
)
from guidancelab.models import predict_velocity, velocity_net
from guidancelab.optim import build_optimizer
from guidancelab.utils import freeze_model

C = 3 * math.pi / 4
SEEDS = (0, 1, 2)
N_BINS = 16

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def cfg():
    cfg = get_default_config()
    cfg.backbone.steps = 8000
    cfg.backbone.print_freq = 2000
    cfg.flow.steps = 8000
    cfg.flow.print_freq = 2000
    cfg.flow.sample_steps = 50
    cfg.scheduler.steps = 3000
    cfg.scheduler.print_freq = 1000
    cfg.sample.seeds = 200
    return cfg


def _seeded(cfg, seed, **scheduler):
    cfg = cfg.clone()
    cfg.backbone.seed = seed
    cfg.flow.seed = seed
    cfg.scheduler.seed = seed
    for key, value in scheduler.items():
        cfg.scheduler[key] = value
    return cfg


@pytest.fixture(scope='module')
def dnets(cfg):
    return {s: freeze_model(train_denoiser(_seeded(cfg, s))) for s in SEEDS}


@pytest.fixture(scope='module')
def snets(cfg, dnets):
    return {s: train_scheduler(_seeded(cfg, s), dnets[s]) for s in SEEDS}


@pytest.fixture(scope='module')
def vnets(cfg):
    return {s: freeze_model(train_velocity(_seeded(cfg, s))) for s in SEEDS}


@pytest.fixture(scope='module')
def flow_snets(cfg, vnets):
    return {s: train_flow_scheduler(_seeded(cfg, s), vnets[s]) for s in SEEDS}


@pytest.fixture(scope='module')
def trained_dnet(dnets):
    return dnets[0]


@pytest.fixture(scope='module')
def trained_snet(snets):
    return snets[0]


@pytest.fixture(scope='module')
def trained_vnet(vnets):
    return vnets[0]


def _report(cfg, backbone, snet=None, **kwargs):
    run_cfg = RunConfig.from_cfg(cfg, '', '', c=C, **kwargs)
    return evaluate_models(backbone, run_cfg, snet)[0]


def _endpoints(cfg, backbone, **kwargs):
    run_cfg = RunConfig.from_cfg(cfg, '', '', c=C, **kwargs)
    _, trajs = evaluate_models(backbone, run_cfg)
    return torch.stack([tr.z0 for tr in trajs])


def _mean_rates(cfg, backbones, snets=None, **kwargs):
    """Adherence and on-manifold rate averaged over the training seeds."""
    reports = [
        _report(cfg, backbones[s], snets[s] if snets else None, **kwargs)
        for s in SEEDS
    ]
    adherence = sum(r.adherence_rate for r in reports) / len(reports)
    on_manifold = sum(r.on_manifold_rate for r in reports) / len(reports)
    return adherence, on_manifold


def _bin_mass(endpoints):
    width = 2 * math.pi / N_BINS
    bins = (endpoint_angles(endpoints) / width).floor().long().clamp(max=N_BINS - 1)
    return torch.bincount(bins, minlength=N_BINS).to(torch.float64) / bins.numel()


class TestDenoiser:

    def test_unconditional_samples_cover_the_ring(self, cfg, trained_dnet):
        endpoints = _endpoints(cfg, trained_dnet, mode='cfg', w=0., seeds=500)
        assert (_bin_mass(endpoints) >= 0.02).sum().item() >= 12

    def test_unconditional_samples_stay_on_the_ring(self, cfg, trained_dnet):
        endpoints = _endpoints(cfg, trained_dnet, mode='cfg', w=0., seeds=500)
        assert on_manifold_rate(endpoints, trained_dnet.spec, 3.) >= 0.9

    def test_conditional_samples_gather_near_the_target(self, cfg, trained_dnet):
        endpoints = _endpoints(cfg, trained_dnet, mode='cfg', w=1., seeds=500)
        mass = _bin_mass(endpoints)
        k = round(C / (2 * math.pi / N_BINS))
        near = sum(mass[(k + i) % N_BINS].item() for i in (-1, 0, 1))
        assert near >= 0.6


class TestGuidance:

    def test_cfgpp_trades_adherence_for_manifold(self, cfg, dnets):
        rates = [_mean_rates(cfg, dnets, mode='cfgpp', w=w) for w in (0.1, 0.15, 0.2)]
        adherence = [a for a, _ in rates]
        off_manifold = [1. - m for _, m in rates]
        assert adherence[0] < adherence[1] < adherence[2]
        assert off_manifold[0] <= off_manifold[1] <= off_manifold[2]

    def test_delta_is_smallest_at_the_target(self, trained_dnet):
        heatmap = delta_norm_heatmap(trained_dnet, 1, C, size=64)
        _, _, angle = annulus_argmin(heatmap, trained_dnet.spec)
        assert angular_distance(angle, C) <= math.pi / 16

    def test_delta_is_small_near_the_origin_at_full_noise(self, trained_dnet):
        heatmap = delta_norm_heatmap(
            trained_dnet, trained_dnet.schedule.T, C, size=64
        )
        yy, xx = torch.meshgrid(heatmap.ys, heatmap.xs, indexing='ij')
        radius = (xx**2 + yy**2).sqrt()
        lo, hi = trained_dnet.spec.band(3)
        norms = heatmap.values.exp()
        inner = norms[radius < 0.3].mean()
        ring = norms[(radius >= lo) & (radius <= hi)].mean()
        assert inner < ring


class TestScheduler:

    def test_scales_follow_lambda(self, trained_snet):
        t_grid, delta_grid = default_w_grids(trained_snet, 32)
        high = w_heatmap(trained_snet, 0.9, t_grid, delta_grid).values.mean()
        low = w_heatmap(trained_snet, 0.1, t_grid, delta_grid).values.mean()
        assert high > low

    def test_run_uses_larger_scales_at_high_lambda(
        self, cfg, trained_dnet, trained_snet
    ):
        high = _report(
            cfg, trained_dnet, trained_snet, mode='anneal', lam=0.9, seeds=50
        )
        low = _report(
            cfg, trained_dnet, trained_snet, mode='anneal', lam=0.1, seeds=50
        )
        assert high.mean_w > low.mean_w

    def test_delta_loss_alone_learns_larger_scales(self, cfg, trained_dnet):
        delta_only = train_scheduler(_seeded(cfg, 0, lambda_fixed=1.), trained_dnet)
        eps_only = train_scheduler(_seeded(cfg, 0, lambda_fixed=0.), trained_dnet)
        high = _report(cfg, trained_dnet, delta_only, mode='anneal', lam=1., seeds=50)
        low = _report(cfg, trained_dnet, eps_only, mode='anneal', lam=0., seeds=50)
        assert high.mean_w > low.mean_w

    def test_beats_constant_scales(self, cfg, dnets, snets):
        adherence, on_manifold = _mean_rates(
            cfg, dnets, snets, mode='anneal', lam=0.7
        )
        mid_adherence, mid_on_manifold = _mean_rates(
            cfg, dnets, mode='cfgpp', w=0.15
        )
        high_adherence, _ = _mean_rates(cfg, dnets, mode='cfgpp', w=0.2)
        assert adherence >= mid_adherence
        assert on_manifold >= mid_on_manifold
        assert adherence >= high_adherence - 0.05


class _PointMassEngine(VelocityEngine):
    """Flow matching between one fixed source and one fixed data point."""

    x0 = torch.tensor([-0.4, 0.3], dtype=torch.float64)

    def draw_step(self, x1, conds):
        n = x1.size(0)
        x0 = self.x0.expand(n, 2)
        t = torch.rand((n, ), generator=self.generator, dtype=torch.float64)
        target = x1 - x0
        return x0 + t.unsqueeze(1) * target, t, target


class TestFlow:

    def test_point_mass_learns_the_displacement(self):
        x1 = torch.tensor([math.cos(C), math.sin(C)], dtype=torch.float64)
        datamanager = RingDataManager(num_samples=1, batch_size=64)
        datamanager.points = x1.unsqueeze(0)
        datamanager.conds = torch.tensor([C], dtype=torch.float64)
        vnet = velocity_net(hidden_dims=(32, 32), seed=0)
        optimizer = build_optimizer(vnet.net, lr=3e-3)
        engine = _PointMassEngine(datamanager, vnet, optimizer, seed=0)
        engine.run(max_steps=3000, print_freq=1000)

        displacement = x1 - _PointMassEngine.x0
        for t in (0.1, 0.5, 0.9):
            x = _PointMassEngine.x0 + t * displacement
            v = predict_velocity(vnet, x, t, C)
            assert (v - displacement).norm().item() <= 0.05

    def test_conditional_flow_lands_on_the_ring(self, cfg, trained_vnet):
        endpoints = _endpoints(
            cfg, trained_vnet, mode='cfg', w=1., seeds=500, flow_steps=100
        )
        assert on_manifold_rate(endpoints, trained_vnet.spec, 3.) >= 0.7

    def test_unconditional_flow_covers_the_ring(self, cfg, trained_vnet):
        endpoints = _endpoints(cfg, trained_vnet, mode='cfg', w=0., seeds=500)
        assert (_bin_mass(endpoints) > 0).sum().item() >= 12

    def test_adherence_and_off_manifold_grow_with_scale(self, cfg, vnets):
        rates = [_mean_rates(cfg, vnets, mode='cfg', w=w) for w in (1., 1.5, 2.)]
        adherence = [a for a, _ in rates]
        off_manifold = [1. - m for _, m in rates]
        assert adherence[0] < adherence[1] < adherence[2]
        assert off_manifold[0] <= off_manifold[1] <= off_manifold[2]

    def test_scheduler_beats_constant_scale(self, cfg, vnets, flow_snets):
        adherence, on_manifold = _mean_rates(
            cfg, vnets, flow_snets, mode='anneal', lam=0.7
        )
        base_adherence, base_on_manifold = _mean_rates(
            cfg, vnets, mode='cfg', w=1.5
        )
        assert adherence >= base_adherence
        assert on_manifold >= base_on_manifold

    def test_delta_is_smallest_at_the_target(self, trained_vnet):
        heatmap = delta_norm_heatmap(trained_vnet, 1., C, size=64)
        _, _, angle = annulus_argmin(heatmap, trained_vnet.spec)
        assert angular_distance(angle, C) <= math.pi / 16
