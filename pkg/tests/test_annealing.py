import math
import pytest
import torch

from guidancelab.data import make_dataset
from guidancelab.engine import (
    estimate_delta_max, scheduler_meta, scheduler_train_step,
    train_flow_scheduler, train_scheduler
)
from guidancelab.guidance import PerturbConfig
from guidancelab.losses import AnnealingLoss, FlowAnnealingLoss
from guidancelab.models import AblationFlags, annealing_scheduler
from guidancelab.optim import build_optimizer
from guidancelab.utils import TrainingFailure, make_generator, params_digest


def _flat(grads):
    return torch.cat([g.reshape(-1) for g in grads.weights + grads.biases])


def _finite_differences(criterion, snet, batch, h=1e-6):
    fd = []
    with torch.no_grad():
        for p in list(snet.net.weights) + list(snet.net.biases):
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = criterion.compute(snet, batch, need_grad=False).combined
                flat[i] = orig - h
                down = criterion.compute(snet, batch, need_grad=False).combined
                flat[i] = orig
                fd.append((up - down) / (2 * h))
    return torch.tensor(fd, dtype=torch.float64)


def _rel_err(a, b):
    return ((a - b).norm() / max(a.norm().item(), b.norm().item(), 1e-12)).item()


def _batch(criterion, spec, n=4, seed=0):
    x, conds = make_dataset(n, spec, seed=seed)
    return criterion.sample_inputs(x, conds, make_generator(seed + 1))


class TestAnnealingLoss:

    @pytest.mark.parametrize('renoise_null', [True, False])
    @pytest.mark.parametrize('delta_eval_timestep', ['prev', 'same'])
    def test_gradient_matches_finite_differences(
        self, dnet, sched, spec, renoise_null, delta_eval_timestep
    ):
        snet = annealing_scheduler(
            sched.T,
            1.,
            hidden_dims=(8, 8),
            ablation=AblationFlags(use_cfgpp_renoise=renoise_null),
            seed=7
        )
        criterion = AnnealingLoss(
            dnet, sched, perturb=PerturbConfig(s=0.1),
            delta_eval_timestep=delta_eval_timestep
        )
        batch = _batch(criterion, spec)
        analytic = _flat(criterion.compute(snet, batch).grads)
        assert _rel_err(analytic, _finite_differences(criterion, snet, batch)) < 1e-3

    def test_backbone_path_contributes(self, dnet, sched, snet, spec):
        criterion = AnnealingLoss(dnet, sched, lambda_fixed=1.)
        batch = _batch(criterion, spec)
        full = _flat(criterion.compute(snet, batch).grads)
        direct = _flat(criterion.compute(snet, batch, through_backbone=False).grads)
        assert direct.abs().max().item() == 0.
        assert full.abs().max().item() > 0.

    @pytest.mark.parametrize('lam', [0., 1.])
    def test_lambda_endpoints(self, dnet, sched, snet, spec, lam):
        criterion = AnnealingLoss(dnet, sched, lambda_fixed=lam)
        result = criterion.compute(snet, _batch(criterion, spec, n=6))
        expected = result.loss_delta if lam == 1. else result.loss_eps
        assert result.combined == pytest.approx(expected, rel=1e-12)

    def test_compute_leaves_backbone_and_scheduler_untouched(
        self, dnet, sched, snet, spec
    ):
        criterion = AnnealingLoss(dnet, sched)
        before = params_digest(dnet), params_digest(snet)
        criterion.compute(snet, _batch(criterion, spec))
        assert (params_digest(dnet), params_digest(snet)) == before

    def test_non_finite_scale_raises(self, dnet, sched, snet, spec):
        with torch.no_grad():
            snet.net.biases[-1].fill_(math.nan)
        optimizer = build_optimizer(snet.net)
        batch = make_dataset(3, spec, seed=0)
        with pytest.raises(TrainingFailure) as excinfo:
            scheduler_train_step(
                snet, dnet, batch, sched, PerturbConfig(), make_generator(0),
                optimizer=optimizer, step=4
            )
        assert excinfo.value.step == 4
        assert set(excinfo.value.diagnostics) == {'t', 'delta_norm', 'w'}

    def test_train_step_without_optimizer_returns_grads(self, dnet, sched, snet, spec):
        digest = params_digest(snet)
        result = scheduler_train_step(
            snet, dnet, make_dataset(3, spec, seed=0), sched, PerturbConfig(),
            make_generator(0)
        )
        assert math.isfinite(result.combined)
        assert _flat(result.grads).numel() == sum(p.numel() for p in snet.parameters())
        assert params_digest(snet) == digest

    def test_invalid_arguments(self, dnet, sched):
        with pytest.raises(ValueError):
            AnnealingLoss(dnet, sched, delta_eval_timestep='next')
        with pytest.raises(ValueError):
            AnnealingLoss(dnet, sched, lambda_fixed=1.5)

    def test_empty_batch(self, dnet, sched):
        criterion = AnnealingLoss(dnet, sched)
        with pytest.raises(ValueError):
            criterion.sample_inputs(
                torch.zeros(0, 2), torch.zeros(0), make_generator(0)
            )


class TestFlowAnnealingLoss:

    @pytest.mark.parametrize('eps_target', ['guided', 'conditional'])
    def test_gradient_matches_finite_differences(self, vnet, snet, spec, eps_target):
        criterion = FlowAnnealingLoss(
            vnet, steps_per_unit=10, perturb=PerturbConfig(s=0.1),
            eps_target=eps_target
        )
        batch = _batch(criterion, spec)
        analytic = _flat(criterion.compute(snet, batch).grads)
        assert _rel_err(analytic, _finite_differences(criterion, snet, batch)) < 1e-3

    def test_times_stay_below_one(self, vnet, spec):
        criterion = FlowAnnealingLoss(vnet, steps_per_unit=4)
        batch = _batch(criterion, spec, n=200)
        assert (batch.t >= 0).all() and (batch.t <= 0.75).all()

    @pytest.mark.parametrize(
        'kwargs', [{'steps_per_unit': 1}, {'steps_per_unit': 2.5},
                   {'eps_target': 'data'}, {'lambda_fixed': -0.5}]
    )
    def test_invalid_arguments(self, vnet, kwargs):
        with pytest.raises(ValueError):
            FlowAnnealingLoss(vnet, **kwargs)


class TestDeltaMax:

    def test_estimate_is_positive_and_seeded(self, dnet):
        a = estimate_delta_max(dnet, n_draws=500, seed=1)
        assert a > 0
        assert estimate_delta_max(dnet, n_draws=500, seed=1) == a

    def test_flow_estimate(self, vnet):
        assert estimate_delta_max(vnet, n_draws=500) > 0

    def test_no_gap_falls_back_to_one(self, dnet, zero_params):
        zero_params(dnet)
        with pytest.warns(UserWarning):
            assert estimate_delta_max(dnet, n_draws=100) == 1.

    @pytest.mark.parametrize('kwargs', [{'n_draws': 0}, {'q': 0.}, {'q': 1.5}])
    def test_invalid_arguments(self, dnet, kwargs):
        with pytest.raises(ValueError):
            estimate_delta_max(dnet, **kwargs)


class TestSchedulerTraining:

    def test_zero_steps_leave_the_init(self, tiny_cfg, dnet):
        tiny_cfg.scheduler.steps = 0
        tiny_cfg.scheduler.delta_max = 2.
        snet = train_scheduler(tiny_cfg, dnet)
        fresh = annealing_scheduler(10, 2., hidden_dims=(8, 8), seed=0)
        for p, q in zip(snet.parameters(), fresh.parameters()):
            assert torch.equal(p, q)
        assert snet.history == []

    def test_history_and_frozen_backbone(self, tiny_cfg, dnet):
        digest = params_digest(dnet)
        snet = train_scheduler(tiny_cfg, dnet)
        assert len(snet.history) == tiny_cfg.scheduler.steps
        assert set(snet.history[0]) == {'loss', 'loss_delta', 'loss_eps', 'w'}
        assert params_digest(dnet) == digest
        assert snet.delta_max > 0

    def test_training_is_deterministic(self, tiny_cfg, dnet):
        a = train_scheduler(tiny_cfg, dnet)
        b = train_scheduler(tiny_cfg, dnet)
        assert params_digest(a) == params_digest(b)

    def test_ablation_flags_reach_the_model(self, tiny_cfg, dnet):
        tiny_cfg.ablation.constrain_w = True
        tiny_cfg.ablation.use_t = False
        snet = train_scheduler(tiny_cfg, dnet)
        assert snet.constrain_w and not snet.ablation.use_t

    def test_fixed_lambda(self, tiny_cfg, dnet):
        tiny_cfg.scheduler.lambda_fixed = 0.3
        snet = train_scheduler(tiny_cfg, dnet)
        meta = scheduler_meta(snet, tiny_cfg, dnet)
        assert meta['lambda_sampling'] == 'fixed:0.3'
        assert meta['backbone_hash'] == params_digest(dnet)
        assert meta['num_steps'] == 10

    def test_flow_scheduler(self, tiny_cfg, vnet):
        snet = train_flow_scheduler(tiny_cfg, vnet)
        assert snet.num_steps == tiny_cfg.scheduler.flow_steps
        assert len(snet.history) == tiny_cfg.scheduler.steps
