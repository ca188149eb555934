from __future__ import division, absolute_import
import torch
import torch.nn as nn

from guidancelab.data import COND_DIM, RingSpec, embed_condition
from guidancelab.diffusion import build_schedule
from guidancelab.nnkernel import init_params, mlp_forward, sinusoidal_embed
from guidancelab.utils import (
    CheckpointError, ShapeError, freeze_model, load_checkpoint,
    mlp_from_checkpoint
)

__all__ = [
    'DenoiserNet', 'VelocityNet', 'predict_eps', 'predict_velocity',
    'denoiser', 'velocity_net', 'backbone_from_checkpoint', 'load_backbone'
]

POINT_DIM = 2


class ConditionalBackbone(nn.Module):
    """Base class of the conditional 2D backbones.

    The input of the wrapped :class:`MlpNet` is
    ``[point (2), sinusoidal_embed(time, t_embed_dim), condition embedding (3)]``.

    Args:
        net (MlpNet): wrapped network.
        t_embed_dim (int): width of the time embedding.
        spec (RingSpec, optional): ring the backbone was trained on (provenance).
    """

    def __init__(self, net, t_embed_dim=8, spec=None):
        super(ConditionalBackbone, self).__init__()
        expected = POINT_DIM + t_embed_dim + COND_DIM
        if net.in_dim != expected or net.out_dim != POINT_DIM:
            raise ValueError(
                'Backbone net must map {} -> {}, but got {}'.format(
                    expected, POINT_DIM, net.layer_dims
                )
            )
        self.net = net
        self.t_embed_dim = t_embed_dim
        self.spec = spec if spec is not None else RingSpec()

    def time_feature(self, t):
        raise NotImplementedError

    def forward_embedded(self, x, t, c_emb):
        """Batched evaluation with an already embedded condition.

        Args:
            x (torch.Tensor): points (n, 2).
            t (torch.Tensor): times, shape (n,) or scalar.
            c_emb (torch.Tensor): condition embeddings (n, 3) or (3,).

        Returns:
            tuple: output (n, 2) and the :class:`GradTape`.
        """
        x = torch.as_tensor(x, dtype=torch.float64)
        n = x.size(0)
        tfeat = sinusoidal_embed(self.time_feature(t), self.t_embed_dim)
        if tfeat.dim() == 1:
            tfeat = tfeat.expand(n, -1)
        c_emb = torch.as_tensor(c_emb, dtype=torch.float64)
        if c_emb.dim() == 1:
            c_emb = c_emb.expand(n, -1)
        return mlp_forward(self.net, torch.cat([x, tfeat, c_emb], dim=1))

    def forward(self, x, t, c_emb):
        return self.forward_embedded(x, t, c_emb)[0]


class DenoiserNet(ConditionalBackbone):
    """Conditional noise predictor eps(z_t, t, c) of a discrete schedule."""

    def __init__(self, net, schedule, t_embed_dim=8, spec=None):
        super(DenoiserNet, self).__init__(net, t_embed_dim, spec)
        self.schedule = schedule

    def time_feature(self, t):
        t = self.schedule.check_t(t, low=1)
        return t.to(torch.float64) / self.schedule.T


class VelocityNet(ConditionalBackbone):
    """Conditional velocity field v(x, t, c), continuous t in [0, 1]."""

    def time_feature(self, t):
        t = torch.as_tensor(t, dtype=torch.float64)
        if (t < 0).any() or (t > 1).any():
            raise ValueError('Flow time must lie in [0, 1], but got {}'.format(t))
        return t


def _single(backbone, x, t, cond):
    x = torch.as_tensor(x, dtype=torch.float64)
    if x.dim() != 1 or x.numel() != POINT_DIM:
        raise ShapeError(
            'Expected a point of shape (2,), but got {}'.format(tuple(x.shape))
        )
    out, _ = backbone.forward_embedded(
        x.unsqueeze(0), t, embed_condition(cond)
    )
    return out[0]


def predict_eps(dnet, z, t, cond):
    """eps(z, t, cond) for a single point; ``cond=None`` is the null condition."""
    return _single(dnet, z, t, cond)


def predict_velocity(vnet, x, t, cond):
    """v(x, t, cond) for a single point, t in [0, 1]."""
    return _single(vnet, x, t, cond)


def _layer_dims(hidden_dims, t_embed_dim):
    return [POINT_DIM + t_embed_dim + COND_DIM] + list(hidden_dims) + [POINT_DIM]


def denoiser(schedule, hidden_dims=(64, 64, 64), t_embed_dim=8, seed=0, spec=None, **kwargs):
    net = init_params(_layer_dims(hidden_dims, t_embed_dim), seed)
    return DenoiserNet(net, schedule, t_embed_dim=t_embed_dim, spec=spec)


def velocity_net(hidden_dims=(64, 64, 64), t_embed_dim=8, seed=0, spec=None, **kwargs):
    net = init_params(_layer_dims(hidden_dims, t_embed_dim), seed)
    return VelocityNet(net, t_embed_dim=t_embed_dim, spec=spec)


def backbone_from_checkpoint(state):
    """Rebuilds a DenoiserNet / VelocityNet from a loaded checkpoint dict."""
    kind = state['kind']
    if kind not in ('denoiser', 'velocity'):
        raise CheckpointError(
            'Expected a backbone checkpoint, but got kind "{}"'.format(kind)
        )
    meta = state['meta']
    net = mlp_from_checkpoint(state)
    spec = RingSpec.from_dict(meta['ring']) if 'ring' in meta else None
    t_embed_dim = meta.get('t_embed_dim', 8)
    if kind == 'velocity':
        return VelocityNet(net, t_embed_dim=t_embed_dim, spec=spec)
    if 'schedule' not in meta:
        raise CheckpointError('Denoiser checkpoint misses its schedule')
    s = meta['schedule']
    sched = build_schedule(
        s['schedule_kind'], s['T'], s['beta_start'], s['beta_end']
    )
    return DenoiserNet(net, sched, t_embed_dim=t_embed_dim, spec=spec)


def load_backbone(fpath):
    """Loads a backbone checkpoint and freezes the returned model."""
    return freeze_model(backbone_from_checkpoint(load_checkpoint(fpath)))
