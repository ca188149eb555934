from __future__ import division, print_function, absolute_import
import math
import warnings
import torch

from guidancelab.data import (
    RingDataManager, RingSpec, embed_conditions, sample_condition, sample_ring
)
from guidancelab.default_config import (
    ablation_kwargs, engine_run_kwargs, optimizer_kwargs, perturb_kwargs,
    ring_kwargs
)
from guidancelab.diffusion import add_noise
from guidancelab.guidance import PerturbConfig, guidance_pair
from guidancelab.losses import AnnealingLoss, FlowAnnealingLoss
from guidancelab.models import AblationFlags, DenoiserNet, annealing_scheduler
from guidancelab.nnkernel import accumulate_grads
from guidancelab.optim import adamw_step, build_optimizer
from guidancelab.utils import (
    TrainingFailure, count_num_param, make_generator, params_digest
)

from .engine import Engine

__all__ = [
    'SchedulerEngine', 'estimate_delta_max', 'scheduler_train_step',
    'flow_scheduler_train_step', 'train_scheduler', 'train_flow_scheduler',
    'scheduler_meta'
]


def _diagnostics(result):
    d = result.diagnostics
    # the sample with the largest scale is the usual culprit
    i = int(torch.nan_to_num(d['w'].abs(), nan=math.inf).argmax())
    return {
        't': round(float(d['t'][i]), 6),
        'delta_norm': float(d['delta_norm'][i]),
        'w': float(d['w'][i])
    }


def _finish_step(snet, result, optimizer, step):
    if not math.isfinite(result.combined):
        raise TrainingFailure(step, _diagnostics(result))
    if optimizer is not None:
        adamw_step(snet.net, result.grads, optimizer)
    return result


def estimate_delta_max(
    backbone, spec=None, n_draws=10000, q=0.999, seed=0
):
    """Typical maximum of ||delta|| for a frozen backbone.

    Draws random noisy points (``z_t`` of the schedule for a denoiser,
    ``x(t)`` on the straight path for a velocity net) and returns the
    ``q``-quantile of the conditional/unconditional gap.

    Args:
        backbone (DenoiserNet or VelocityNet): frozen backbone.
        spec (RingSpec, optional): ring the draws come from.
        n_draws (int, optional): number of draws. Default is 10000.
        q (float, optional): quantile. Default is 0.999.
        seed (int, optional): seed of the draws. Default is 0.
    """
    if n_draws < 1:
        raise ValueError('n_draws must be >= 1, but got {}'.format(n_draws))
    if not 0 < q <= 1:
        raise ValueError('q must lie in (0, 1], but got {}'.format(q))
    spec = spec if spec is not None else backbone.spec
    gen = make_generator(seed)
    conds = sample_condition(gen, n_draws)
    x1 = sample_ring(conds, spec, gen)
    noise = torch.randn((n_draws, 2), generator=gen, dtype=torch.float64)
    if isinstance(backbone, DenoiserNet):
        sched = backbone.schedule
        t = torch.randint(1, sched.T + 1, (n_draws, ), generator=gen)
        x = add_noise(x1, t, noise, sched)
    else:
        t = torch.rand((n_draws, ), generator=gen, dtype=torch.float64)
        x = noise + t.unsqueeze(1) * (x1 - noise)
    out_c, _, out_null, _ = guidance_pair(
        backbone, x, t, embed_conditions(conds)
    )
    norms = (out_c - out_null).norm(dim=1)
    delta_max = torch.quantile(norms, q).item()
    if not delta_max > 0:
        warnings.warn(
            'Backbone shows no conditional/unconditional gap, '
            'falling back to delta_max = 1.0'
        )
        delta_max = 1.
    return delta_max


def scheduler_train_step(
    snet,
    dnet,
    batch,
    sched,
    perturb,
    generator,
    optimizer=None,
    lambda_fixed=None,
    delta_eval_timestep='prev',
    step=0
):
    """One annealing-scheduler training step on a batch of (z0, c).

    Draws t, eps and lambda per sample, perturbs the condition (unless
    ablated), takes one guided denoise/renoise step and differentiates the
    combined delta/epsilon loss w.r.t. the scheduler. With an optimizer the
    scheduler is updated, otherwise only the gradients are returned.

    Args:
        snet (SchedulerNet): scheduler being trained.
        dnet (DenoiserNet): frozen backbone.
        batch (tuple): points (n, 2) and angles (n,).
        sched (NoiseSchedule): schedule of ``dnet``.
        perturb (PerturbConfig): condition corruption.
        generator (torch.Generator): random stream of the per-sample draws.
        optimizer (Optimizer, optional): optimizer built on ``snet.net``.
        lambda_fixed (float, optional): lambda for every sample.
        delta_eval_timestep (str, optional): "prev" or "same".
        step (int, optional): step index reported on failure.

    Returns:
        LossResult
    """
    criterion = AnnealingLoss(
        dnet,
        sched,
        perturb=perturb,
        lambda_fixed=lambda_fixed,
        delta_eval_timestep=delta_eval_timestep
    )
    z0, conds = batch
    inputs = criterion.sample_inputs(
        z0, conds, generator, snet.ablation.use_perturbation
    )
    return _finish_step(snet, criterion.compute(snet, inputs), optimizer, step)


def flow_scheduler_train_step(
    snet,
    vnet,
    batch,
    steps_per_unit,
    perturb,
    generator,
    optimizer=None,
    lambda_fixed=None,
    eps_target='guided',
    step=0
):
    """Velocity-field analog of :func:`scheduler_train_step`.

    ``batch`` holds data points x1 (n, 2) and their angles (n,).
    """
    criterion = FlowAnnealingLoss(
        vnet,
        steps_per_unit=steps_per_unit,
        perturb=perturb,
        lambda_fixed=lambda_fixed,
        eps_target=eps_target
    )
    x1, conds = batch
    inputs = criterion.sample_inputs(
        x1, conds, generator, snet.ablation.use_perturbation
    )
    return _finish_step(snet, criterion.compute(snet, inputs), optimizer, step)


class SchedulerEngine(Engine):
    r"""Trains a :class:`SchedulerNet` against a frozen backbone.

    Every optimizer update sums the gradients of ``accum_steps`` micro-batches
    drawn from the datamanager.

    Args:
        datamanager (RingDataManager): (point, angle) micro-batches.
        model (SchedulerNet): scheduler being trained.
        optimizer (Optimizer): optimizer built on ``model.net``.
        criterion (AnnealingLoss or FlowAnnealingLoss): training objective.
        accum_steps (int, optional): micro-batches per update. Default is 8.
        seed (int, optional): seed of the per-sample draws. Default is 0.

    Examples::
        >>> criterion = guidancelab.losses.AnnealingLoss(dnet, sched)
        >>> snet = guidancelab.models.build_model(
        >>>     'scheduler', num_steps=sched.T, delta_max=2.5
        >>> )
        >>> optimizer = guidancelab.optim.build_optimizer(snet.net, lr=1e-3)
        >>> engine = SchedulerEngine(
        >>>     RingDataManager(batch_size=2), snet, optimizer, criterion
        >>> )
        >>> engine.run(max_steps=20000, print_freq=1000)
    """

    def __init__(
        self,
        datamanager,
        model,
        optimizer,
        criterion,
        accum_steps=8,
        seed=0
    ):
        super(SchedulerEngine, self).__init__(datamanager, model, optimizer)
        if accum_steps < 1:
            raise ValueError(
                'accum_steps must be >= 1, but got {}'.format(accum_steps)
            )
        self.criterion = criterion
        self.accum_steps = int(accum_steps)
        self.generator = make_generator(seed + 2)

    def forward_backward(self):
        total = None
        summary = {'loss': 0., 'loss_delta': 0., 'loss_eps': 0., 'w': 0.}
        use_perturbation = self.model.ablation.use_perturbation
        for _ in range(self.accum_steps):
            x, conds = self.datamanager.next_batch()
            inputs = self.criterion.sample_inputs(
                x, conds, self.generator, use_perturbation
            )
            result = self.criterion.compute(self.model, inputs)
            self.check_finite(result.combined, _diagnostics(result))
            total = accumulate_grads(total, result.grads)
            summary['loss'] += result.combined
            summary['loss_delta'] += result.loss_delta
            summary['loss_eps'] += result.loss_eps
            summary['w'] += result.diagnostics['w'].mean().item()

        adamw_step(self.model.net, total, self.optimizer)
        return {k: v / self.accum_steps for k, v in summary.items()}


def _lambda_fixed(cfg):
    lam = cfg.scheduler.lambda_fixed
    return None if lam < 0 else lam


def scheduler_meta(snet, cfg, backbone):
    """Provenance stored in a scheduler checkpoint."""
    meta = snet.meta()
    meta['lambda_sampling'] = 'uniform' if _lambda_fixed(cfg) is None \
        else 'fixed:{}'.format(cfg.scheduler.lambda_fixed)
    meta['backbone_hash'] = params_digest(backbone)
    meta['perturb'] = PerturbConfig(**perturb_kwargs(cfg)).to_dict()
    meta['train'] = {
        k: (list(v) if isinstance(v, (list, tuple)) else v)
        for k, v in cfg.scheduler.items()
    }
    return meta


def _train(cfg, backbone, num_steps, criterion, spec, save_dir):
    node = cfg.scheduler
    delta_max = node.delta_max
    if delta_max <= 0:
        delta_max = estimate_delta_max(
            backbone,
            spec,
            n_draws=node.delta_draws,
            q=node.delta_quantile,
            seed=node.seed
        )
        print('=> Estimated delta_max = {:.6f}'.format(delta_max))

    snet = annealing_scheduler(
        num_steps,
        delta_max,
        hidden_dims=node.hidden_dims,
        ablation=AblationFlags(**ablation_kwargs(cfg)),
        seed=node.seed
    )
    print(
        'Model: SchedulerNet ({} params), ablation: {}'.format(
            count_num_param(snet), snet.ablation
        )
    )
    datamanager = RingDataManager(
        spec=spec,
        num_samples=node.num_samples,
        batch_size=node.batch_size,
        seed=node.seed
    )
    optimizer = build_optimizer(snet.net, **optimizer_kwargs(node))
    engine = SchedulerEngine(
        datamanager,
        snet,
        optimizer,
        criterion,
        accum_steps=node.accum_steps,
        seed=node.seed
    )

    digest = params_digest(backbone)
    engine.run(save_dir=save_dir, **engine_run_kwargs(node))
    if params_digest(backbone) != digest:
        raise RuntimeError('Frozen backbone was modified during training')
    snet.history = engine.history
    return snet


def train_scheduler(cfg, dnet, sched=None, spec=None, save_dir=None):
    """Trains the annealing scheduler against a frozen noise predictor.

    Args:
        cfg (CfgNode): reads the ``scheduler``, ``perturb`` and ``ablation``
            nodes.
        dnet (DenoiserNet): frozen backbone, left bit-identical.
        sched (NoiseSchedule, optional): defaults to ``dnet.schedule``.
        spec (RingSpec, optional): defaults to ``cfg.ring``.
        save_dir (str, optional): TensorBoard directory.

    Returns:
        SchedulerNet: trained scheduler; ``history`` holds the per-step losses.
    """
    sched = sched if sched is not None else dnet.schedule
    spec = spec if spec is not None else RingSpec(**ring_kwargs(cfg))
    criterion = AnnealingLoss(
        dnet,
        sched,
        perturb=PerturbConfig(**perturb_kwargs(cfg)),
        lambda_fixed=_lambda_fixed(cfg),
        delta_eval_timestep=cfg.scheduler.delta_eval_timestep
    )
    return _train(cfg, dnet, sched.T, criterion, spec, save_dir)


def train_flow_scheduler(cfg, vnet, spec=None, save_dir=None):
    """Trains the annealing scheduler against a frozen velocity field."""
    spec = spec if spec is not None else RingSpec(**ring_kwargs(cfg))
    criterion = FlowAnnealingLoss(
        vnet,
        steps_per_unit=cfg.scheduler.flow_steps,
        perturb=PerturbConfig(**perturb_kwargs(cfg)),
        lambda_fixed=_lambda_fixed(cfg),
        eps_target=cfg.scheduler.flow_eps_target
    )
    return _train(
        cfg, vnet, cfg.scheduler.flow_steps, criterion, spec, save_dir
    )
