from __future__ import division, print_function, absolute_import
import csv
import math
import os.path as osp
import torch

from guidancelab.utils import mkdir_if_missing, make_generator

__all__ = [
    'RingSpec', 'TWO_PI', 'wrap_angle', 'sample_condition', 'sample_ring',
    'embed_condition', 'embed_conditions', 'angular_distance', 'make_dataset',
    'export_dataset_csv', 'COND_DIM'
]

TWO_PI = 2. * math.pi
COND_DIM = 3


class RingSpec(object):
    """Wide ring distribution whose angle is the condition.

    Args:
        mu_r (float, optional): mean radius. Default is 1.0.
        sigma_r (float, optional): radial std. Default is 0.1.
        sigma_theta (float, optional): angular std of p(z | c). Default is pi/128,
            which makes the +-pi/64 band a 2-sigma region.
    """

    def __init__(self, mu_r=1.0, sigma_r=0.1, sigma_theta=math.pi / 128):
        if sigma_r < 0 or sigma_theta < 0:
            raise ValueError(
                'Ring stds must be non-negative, but got sigma_r={} and '
                'sigma_theta={}'.format(sigma_r, sigma_theta)
            )
        if not mu_r > 3 * sigma_r:
            raise ValueError(
                'The ring reaches the origin: mu_r={} <= 3 * sigma_r={}'.format(
                    mu_r, 3 * sigma_r
                )
            )
        self.mu_r = float(mu_r)
        self.sigma_r = float(sigma_r)
        self.sigma_theta = float(sigma_theta)

    def band(self, k=3):
        """Radial interval ``[mu_r - k sigma_r, mu_r + k sigma_r]``."""
        return self.mu_r - k * self.sigma_r, self.mu_r + k * self.sigma_r

    def to_dict(self):
        return {
            'mu_r': self.mu_r,
            'sigma_r': self.sigma_r,
            'sigma_theta': self.sigma_theta
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d['mu_r'], d['sigma_r'], d['sigma_theta'])

    def __repr__(self):
        return 'RingSpec(mu_r={}, sigma_r={}, sigma_theta={})'.format(
            self.mu_r, self.sigma_r, self.sigma_theta
        )


def wrap_angle(a):
    """Maps angles to the canonical range [0, 2pi)."""
    a = torch.remainder(torch.as_tensor(a, dtype=torch.float64), TWO_PI)
    # remainder can round up to exactly 2pi for tiny negative inputs
    return torch.where(a >= TWO_PI, torch.zeros_like(a), a)


def sample_condition(generator, n=None):
    """Uniform angle(s) on [0, 2pi).

    Returns:
        float if ``n`` is None, else a tensor of shape (n,).
    """
    size = (1, ) if n is None else (int(n), )
    c = wrap_angle(
        torch.rand(size, generator=generator, dtype=torch.float64) * TWO_PI
    )
    return c.item() if n is None else c


def sample_ring(c, spec, generator):
    """Draws points of p(z | c) for one or several angles.

    theta = wrap(c + sigma_theta n1), r = mu_r + sigma_r n2.

    Args:
        c (float or torch.Tensor): canonical angle(s).
        spec (RingSpec): ring parameters.
        generator (torch.Generator): random stream.

    Returns:
        torch.Tensor: shape (2,) for a scalar ``c``, else (n, 2).
    """
    c = torch.as_tensor(c, dtype=torch.float64)
    scalar = c.dim() == 0
    c = c.reshape(-1)
    noise = torch.randn(
        (c.numel(), 2), generator=generator, dtype=torch.float64
    )
    theta = wrap_angle(c + spec.sigma_theta * noise[:, 0])
    r = spec.mu_r + spec.sigma_r * noise[:, 1]
    z = torch.stack([r * torch.cos(theta), r * torch.sin(theta)], dim=1)
    return z[0] if scalar else z


def embed_condition(cond):
    """(cos c, sin c, 1) for an angle, (0, 0, 0) for the null condition None."""
    if cond is None:
        return torch.zeros(COND_DIM, dtype=torch.float64)
    c = float(cond)
    return torch.tensor([math.cos(c), math.sin(c), 1.], dtype=torch.float64)


def embed_conditions(angles, null_mask=None):
    """Batched :func:`embed_condition`.

    Args:
        angles (torch.Tensor): shape (n,).
        null_mask (torch.Tensor, optional): bool (n,), True rows get the null
            embedding.
    """
    angles = torch.as_tensor(angles, dtype=torch.float64).reshape(-1)
    emb = torch.stack(
        [torch.cos(angles), torch.sin(angles), torch.ones_like(angles)], dim=1
    )
    if null_mask is not None:
        emb = emb.masked_fill(null_mask.reshape(-1, 1), 0.)
    return emb


def angular_distance(a, b):
    """Distance on the circle, in [0, pi]."""
    d = torch.remainder(
        torch.as_tensor(a, dtype=torch.float64)
        - torch.as_tensor(b, dtype=torch.float64), TWO_PI
    )
    d = torch.minimum(d, TWO_PI - d)
    return d.item() if d.dim() == 0 else d


def make_dataset(n, spec, seed):
    """n i.i.d. (point, angle) pairs.

    Returns:
        tuple: points (n, 2) and angles (n,).
    """
    if int(n) != n or n < 1:
        raise ValueError('Dataset size must be >= 1, but got {}'.format(n))
    gen = make_generator(seed)
    conds = sample_condition(gen, int(n))
    points = sample_ring(conds, spec, gen)
    return points, conds


def export_dataset_csv(points, conds, fpath):
    """Writes the dataset as CSV with header ``x,y,c``."""
    mkdir_if_missing(osp.dirname(fpath))
    with open(fpath, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['x', 'y', 'c'])
        for (x, y), c in zip(points.tolist(), conds.tolist()):
            writer.writerow([repr(x), repr(y), repr(c)])
    return fpath
