from __future__ import division, print_function, absolute_import
import torch

from guidancelab.data import RingDataManager, RingSpec, embed_conditions
from guidancelab.default_config import (
    datamanager_kwargs, engine_run_kwargs, optimizer_kwargs, ring_kwargs,
    schedule_kwargs
)
from guidancelab.diffusion import add_noise, build_schedule
from guidancelab.losses import DenoisingLoss
from guidancelab.models import denoiser, velocity_net
from guidancelab.nnkernel import mlp_backward
from guidancelab.optim import adamw_step, build_optimizer
from guidancelab.utils import count_num_param, make_generator

from .engine import Engine

__all__ = [
    'DenoiserEngine', 'VelocityEngine', 'build_denoiser_engine',
    'build_velocity_engine', 'train_denoiser', 'train_velocity',
    'backbone_meta'
]


class BackboneEngine(Engine):
    """Shared conditional-dropout training step of the two backbones.

    Args:
        datamanager (RingDataManager): (point, angle) minibatches.
        model (DenoiserNet or VelocityNet): backbone being trained.
        optimizer (Optimizer): optimizer built on ``model.net``.
        p_uncond (float, optional): probability of replacing the condition by
            the null condition. Default is 0.1.
        seed (int, optional): seed of the per-step draws. Default is 0.
    """

    def __init__(self, datamanager, model, optimizer, p_uncond=0.1, seed=0):
        super(BackboneEngine, self).__init__(datamanager, model, optimizer)
        if not 0 <= p_uncond < 1:
            raise ValueError(
                'p_uncond must lie in [0, 1), but got {}'.format(p_uncond)
            )
        self.p_uncond = p_uncond
        # the datamanager uses seed and seed + 1
        self.generator = make_generator(seed + 2)
        self.criterion = DenoisingLoss()

    def draw_step(self, x1, conds):
        """Returns (model input point, time, target)."""
        raise NotImplementedError

    def forward_backward(self):
        x1, conds = self.datamanager.next_batch()
        n = x1.size(0)
        x, t, target = self.draw_step(x1, conds)
        null_mask = torch.rand((n, ), generator=self.generator) < self.p_uncond
        c_emb = embed_conditions(conds, null_mask)

        pred, tape = self.model.forward_embedded(x, t, c_emb)
        loss, grad = self.criterion(pred, target)
        self.check_finite(loss.item(), {'loss': loss.item()})
        param_grads, _ = mlp_backward(self.model.net, tape, grad)
        adamw_step(self.model.net, param_grads, self.optimizer)
        return {'loss': loss.item()}


class DenoiserEngine(BackboneEngine):
    r"""Trains the conditional noise predictor with the DDPM objective.

    .. math::
        E \lVert \epsilon_\theta(z_t, t, c') - \epsilon \rVert^2

    with ``t ~ U{1..T}`` and ``c'`` the null condition with probability
    ``p_uncond``.

    Examples::
        >>> sched = guidancelab.diffusion.build_schedule('linear', T=50)
        >>> dnet = guidancelab.models.build_model('denoiser', schedule=sched)
        >>> datamanager = guidancelab.data.RingDataManager(batch_size=256)
        >>> optimizer = guidancelab.optim.build_optimizer(dnet, lr=1e-3)
        >>> engine = DenoiserEngine(datamanager, dnet, optimizer)
        >>> engine.run(max_steps=20000, print_freq=1000)
    """

    def draw_step(self, z0, conds):
        sched = self.model.schedule
        n = z0.size(0)
        t = torch.randint(1, sched.T + 1, (n, ), generator=self.generator)
        eps = torch.randn((n, 2), generator=self.generator, dtype=torch.float64)
        return add_noise(z0, t, eps, sched), t, eps


class VelocityEngine(BackboneEngine):
    r"""Trains the conditional velocity field with the flow-matching objective.

    .. math::
        E \lVert v_\theta(x_0 + t (x_1 - x_0), t, c') - (x_1 - x_0) \rVert^2

    with ``x0 ~ N(0, I)`` and ``t ~ U[0, 1]``.
    """

    def draw_step(self, x1, conds):
        n = x1.size(0)
        x0 = torch.randn((n, 2), generator=self.generator, dtype=torch.float64)
        t = torch.rand((n, ), generator=self.generator, dtype=torch.float64)
        target = x1 - x0
        return x0 + t.unsqueeze(1) * target, t, target


def _build_engine(engine_cls, model, node, spec):
    datamanager = RingDataManager(
        spec=spec, batch_size=node.batch_size, **datamanager_kwargs(node)
    )
    datamanager.show_summary()
    print(
        'Model: {} ({} params)'.format(
            type(model).__name__, count_num_param(model)
        )
    )
    optimizer = build_optimizer(model.net, **optimizer_kwargs(node))
    return engine_cls(
        datamanager, model, optimizer, p_uncond=node.p_uncond, seed=node.seed
    )


def build_denoiser_engine(cfg, spec=None, sched=None):
    spec = spec if spec is not None else RingSpec(**ring_kwargs(cfg))
    if sched is None:
        sched = build_schedule(**schedule_kwargs(cfg))
    node = cfg.backbone
    dnet = denoiser(
        sched,
        hidden_dims=node.hidden_dims,
        t_embed_dim=node.t_embed_dim,
        seed=node.seed,
        spec=spec
    )
    return _build_engine(DenoiserEngine, dnet, node, spec)


def build_velocity_engine(cfg, spec=None):
    spec = spec if spec is not None else RingSpec(**ring_kwargs(cfg))
    node = cfg.flow
    vnet = velocity_net(
        hidden_dims=node.hidden_dims,
        t_embed_dim=node.t_embed_dim,
        seed=node.seed,
        spec=spec
    )
    return _build_engine(VelocityEngine, vnet, node, spec)


def train_denoiser(cfg, spec=None, sched=None, save_dir=None):
    """Trains a :class:`DenoiserNet` as configured by ``cfg.backbone``.

    Returns:
        DenoiserNet: trained, in eval mode.
    """
    engine = build_denoiser_engine(cfg, spec, sched)
    engine.run(save_dir=save_dir, **engine_run_kwargs(cfg.backbone))
    return engine.model


def train_velocity(cfg, spec=None, save_dir=None):
    """Trains a :class:`VelocityNet` as configured by ``cfg.flow``."""
    engine = build_velocity_engine(cfg, spec)
    engine.run(save_dir=save_dir, **engine_run_kwargs(cfg.flow))
    return engine.model


def backbone_meta(model, node):
    """Provenance stored in a backbone checkpoint."""
    meta = {
        'ring': model.spec.to_dict(),
        't_embed_dim': model.t_embed_dim,
        'train': {
            k: (list(v) if isinstance(v, (list, tuple)) else v)
            for k, v in node.items()
        }
    }
    if hasattr(model, 'schedule'):
        meta['schedule'] = model.schedule.to_config()
    return meta
