from __future__ import division, absolute_import
import torch

__all__ = ['PerturbConfig', 'perturb_condition']

_STD_FLOOR = 1e-12


class PerturbConfig(object):
    """Condition-embedding corruption applied while training the scheduler.

    The corruption strength follows ``g(t) = 1 - t / T``: no corruption at
    t = 0, pure noise at t = T.

    Args:
        s (float, optional): noise scale. Default is 0.025.
        psi (float, optional): mix between the rescaled and the raw perturbed
            embedding. Default is 1.0.
        enabled (bool, optional): Default is True.
    """

    def __init__(self, s=0.025, psi=1.0, enabled=True):
        if s < 0:
            raise ValueError('Noise scale s must be >= 0, but got {}'.format(s))
        if not 0 <= psi <= 1:
            raise ValueError('psi must lie in [0, 1], but got {}'.format(psi))
        self.s = float(s)
        self.psi = float(psi)
        self.enabled = bool(enabled)

    def corruption(self, t, num_steps):
        """g(t) = 1 - t / T, clipped to [0, 1]."""
        t = torch.as_tensor(t, dtype=torch.float64)
        return (1. - t / float(num_steps)).clamp(0., 1.)

    def to_dict(self):
        return {'s': self.s, 'psi': self.psi, 'enabled': self.enabled}

    def __repr__(self):
        return 'PerturbConfig(s={}, psi={}, enabled={})'.format(
            self.s, self.psi, self.enabled
        )


def _rescale(c_hat, c):
    mean_hat = c_hat.mean(dim=-1, keepdim=True)
    std_hat = c_hat.std(dim=-1, unbiased=False, keepdim=True)
    mean = c.mean(dim=-1, keepdim=True)
    std = c.std(dim=-1, unbiased=False, keepdim=True)
    safe = std_hat >= _STD_FLOOR
    rescaled = (c_hat - mean_hat) / torch.where(
        safe, std_hat, torch.ones_like(std_hat)
    ) * std + mean
    return torch.where(safe, rescaled, c_hat)


def perturb_condition(c_embed, t, cfg, generator, num_steps):
    """Corrupts a condition embedding and rescales it to the original statistics.

    ``c_hat = sqrt(g) c + s sqrt(1 - g) n`` with ``g = 1 - t / T``; the result is
    ``psi * rescaled(c_hat) + (1 - psi) * c_hat`` where ``rescaled`` matches the
    mean and std of ``c``. Rows with std(c_hat) < 1e-12 are not rescaled.

    Args:
        c_embed (torch.Tensor): embedding (d,) or batch (n, d), d >= 2.
        t: timestep(s), scalar or (n,).
        cfg (PerturbConfig): corruption parameters.
        generator (torch.Generator): random stream.
        num_steps (float): T (1.0 for normalized flow time).
    """
    c = torch.as_tensor(c_embed, dtype=torch.float64)
    if c.size(-1) < 2:
        raise ValueError(
            'Perturbation needs an embedding with >= 2 entries, but got {}'.
            format(tuple(c.shape))
        )
    if not cfg.enabled or cfg.s == 0:
        return c.clone()

    g = cfg.corruption(t, num_steps)
    if g.dim() == 1 and c.dim() == 2:
        g = g.unsqueeze(1)
    noise = torch.randn(c.shape, generator=generator, dtype=torch.float64)
    c_hat = g.sqrt() * c + cfg.s * (1. - g).sqrt() * noise
    out = cfg.psi * _rescale(c_hat, c) + (1. - cfg.psi) * c_hat
    # rows at g = 1 are uncorrupted
    return torch.where(g >= 1., c, out)
