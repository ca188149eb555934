from __future__ import division, absolute_import
import torch
import torch.nn as nn

from guidancelab.nnkernel import init_params, mlp_forward, sinusoidal_embed
from guidancelab.utils import CheckpointError, load_checkpoint, mlp_from_checkpoint

__all__ = [
    'AblationFlags', 'SchedulerNet', 'scheduler_forward', 'annealing_scheduler',
    'scheduler_from_checkpoint', 'load_scheduler'
]

FEATURE_EMBED_DIM = 4
NUM_FEATURES = 3


class AblationFlags(object):
    """Switches that remove or modify one component of the scheduler.

    Args:
        use_t (bool): feed the timestep; False zeroes its embedding.
        use_delta_norm (bool): feed ||delta_t||; False zeroes its embedding.
        use_cfgpp_renoise (bool): renoise with eps_null (True) or the guided
            prediction (False), in training and in annealing sampling.
        use_perturbation (bool): perturb the condition during training.
        constrain_w (bool): squash w into (0, 1) with a logistic output.
    """

    FIELDS = [
        'use_t', 'use_delta_norm', 'use_cfgpp_renoise', 'use_perturbation',
        'constrain_w'
    ]

    def __init__(
        self,
        use_t=True,
        use_delta_norm=True,
        use_cfgpp_renoise=True,
        use_perturbation=True,
        constrain_w=False
    ):
        self.use_t = bool(use_t)
        self.use_delta_norm = bool(use_delta_norm)
        self.use_cfgpp_renoise = bool(use_cfgpp_renoise)
        self.use_perturbation = bool(use_perturbation)
        self.constrain_w = bool(constrain_w)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.FIELDS if k in d})

    def __eq__(self, other):
        return isinstance(other, AblationFlags) \
            and self.to_dict() == other.to_dict()

    def __repr__(self):
        return 'AblationFlags({})'.format(
            ', '.join('{}={}'.format(k, v) for k, v in self.to_dict().items())
        )


class SchedulerNet(nn.Module):
    """Guidance-scale predictor w(t, ||delta_t||, lambda).

    The three features are normalized to [0, 1] (``t / T``,
    ``min(||delta||, delta_max) / delta_max`` and lambda) and each is
    embedded with a 4-dim sinusoidal embedding, giving a 12-dim input.

    Args:
        net (MlpNet): wrapped network, 12 -> 1.
        num_steps (int): T of the diffusion schedule.
        delta_max (float): normalization of ||delta||.
        ablation (AblationFlags, optional): component switches.
    """

    def __init__(self, net, num_steps, delta_max, ablation=None):
        super(SchedulerNet, self).__init__()
        in_dim = FEATURE_EMBED_DIM * NUM_FEATURES
        if net.in_dim != in_dim or net.out_dim != 1:
            raise ValueError(
                'Scheduler net must map {} -> 1, but got {}'.format(
                    in_dim, net.layer_dims
                )
            )
        if delta_max <= 0:
            raise ValueError(
                'delta_max must be positive, but got {}'.format(delta_max)
            )
        self.net = net
        self.num_steps = int(num_steps)
        self.delta_max = float(delta_max)
        # own copy, constrain_w follows the output head
        flags = ablation.to_dict() if ablation is not None else {}
        flags['constrain_w'] = net.output_squash == 'sigmoid'
        self.ablation = AblationFlags(**flags)

    @property
    def constrain_w(self):
        return self.net.output_squash == 'sigmoid'

    def features(self, tau, delta_norm, lam):
        """12-dim input rows for normalized time ``tau`` in [0, 1]."""
        tau = torch.as_tensor(tau, dtype=torch.float64).reshape(-1)
        delta_norm = torch.as_tensor(delta_norm, dtype=torch.float64).reshape(-1)
        lam = torch.as_tensor(lam, dtype=torch.float64).reshape(-1)
        n = max(tau.numel(), delta_norm.numel(), lam.numel())
        tau, delta_norm, lam = [v.expand(n) for v in (tau, delta_norm, lam)]

        d = delta_norm.clamp(0., self.delta_max) / self.delta_max
        t_emb = sinusoidal_embed(tau, FEATURE_EMBED_DIM)
        d_emb = sinusoidal_embed(d, FEATURE_EMBED_DIM)
        if not self.ablation.use_t:
            t_emb = torch.zeros_like(t_emb)
        if not self.ablation.use_delta_norm:
            d_emb = torch.zeros_like(d_emb)
        l_emb = sinusoidal_embed(lam, FEATURE_EMBED_DIM)
        return torch.cat([t_emb, d_emb, l_emb], dim=1)

    def forward_normalized(self, tau, delta_norm, lam):
        """Batched w for normalized time.

        Returns:
            tuple: w with shape (n,) and the :class:`GradTape`.
        """
        lam_t = torch.as_tensor(lam, dtype=torch.float64)
        if (lam_t < 0).any() or (lam_t > 1).any():
            raise ValueError('lambda must lie in [0, 1], but got {}'.format(lam))
        out, tape = mlp_forward(self.net, self.features(tau, delta_norm, lam))
        return out[:, 0], tape

    def forward(self, t, delta_norm, lam):
        t = torch.as_tensor(t, dtype=torch.float64)
        return self.forward_normalized(t / self.num_steps, delta_norm, lam)[0]

    def meta(self):
        return {
            'num_steps': self.num_steps,
            'delta_max': self.delta_max,
            'ablation': self.ablation.to_dict()
        }


def scheduler_forward(snet, t, delta_norm, lam):
    """w for one (t, ||delta_t||, lambda) triple, t in 1..T."""
    if not 1 <= t <= snet.num_steps:
        raise IndexError(
            'Timestep out of range [1, {}]: {}'.format(snet.num_steps, t)
        )
    if delta_norm < 0:
        raise ValueError(
            'delta_norm must be non-negative, but got {}'.format(delta_norm)
        )
    if not 0 <= lam <= 1:
        raise ValueError('lambda must lie in [0, 1], but got {}'.format(lam))
    w, _ = snet.forward_normalized(t / snet.num_steps, delta_norm, lam)
    return w.item()


def annealing_scheduler(
    num_steps,
    delta_max,
    hidden_dims=(128, 128, 128),
    ablation=None,
    seed=0,
    **kwargs
):
    ablation = ablation if ablation is not None else AblationFlags()
    dims = [FEATURE_EMBED_DIM * NUM_FEATURES] + list(hidden_dims) + [1]
    squash = 'sigmoid' if ablation.constrain_w else 'none'
    net = init_params(dims, seed, output_squash=squash)
    return SchedulerNet(net, num_steps, delta_max, ablation=ablation)


def scheduler_from_checkpoint(state):
    """Rebuilds a :class:`SchedulerNet` from a loaded checkpoint dict."""
    if state['kind'] != 'scheduler':
        raise CheckpointError(
            'Expected a scheduler checkpoint, but got kind "{}"'.format(
                state['kind']
            )
        )
    meta = state['meta']
    missing = [k for k in ('num_steps', 'delta_max') if k not in meta]
    if missing:
        raise CheckpointError(
            'Scheduler checkpoint meta misses {}'.format(missing)
        )
    ablation = AblationFlags.from_dict(meta.get('ablation', {}))
    return SchedulerNet(
        mlp_from_checkpoint(state),
        meta['num_steps'],
        meta['delta_max'],
        ablation=ablation
    )


def load_scheduler(fpath):
    return scheduler_from_checkpoint(load_checkpoint(fpath))
