from __future__ import division, absolute_import
import math
from collections import namedtuple
import torch

from guidancelab.data import embed_condition
from guidancelab.guidance import guidance_pair

__all__ = [
    'Heatmap', 'delta_norm_heatmap', 'annulus_argmin', 'w_heatmap',
    'default_w_grids'
]

LOG_FLOOR = math.log(1e-12)

# values[i][j] belongs to the point (xs[j], ys[i])
Heatmap = namedtuple('Heatmap', ['xs', 'ys', 'values', 'meta'])


def _grid(size, extent):
    if size < 1:
        raise ValueError('Grid size must be >= 1, but got {}'.format(size))
    if size == 1:
        return torch.zeros(1, dtype=torch.float64)
    return torch.linspace(-extent, extent, size, dtype=torch.float64)


def delta_norm_heatmap(backbone, t, c, size=64, extent=1.5):
    """log ||delta_t|| over a square grid for the target angle ``c``.

    Works for a noise predictor (integer ``t``) and for a velocity field
    (``t`` in [0, 1]). Zero gaps are floored at log(1e-12).

    Args:
        backbone (DenoiserNet or VelocityNet): frozen backbone.
        t (int or float): time of the evaluation.
        c (float): target angle.
        size (int, optional): points per axis. Default is 64.
        extent (float, optional): grid covers [-extent, extent]^2.

    Returns:
        Heatmap
    """
    xs = _grid(size, extent)
    ys = _grid(size, extent)
    yy, xx = torch.meshgrid(ys, xs, indexing='ij')
    points = torch.stack([xx.reshape(-1), yy.reshape(-1)], dim=1)
    out_c, _, out_null, _ = guidance_pair(
        backbone, points, t, embed_condition(c)
    )
    norms = (out_c - out_null).norm(dim=1).clamp(min=1e-12)
    values = norms.log().reshape(ys.numel(), xs.numel())
    meta = {'kind': 'delta_norm', 't': t, 'c': float(c)}
    return Heatmap(xs, ys, values, meta)


def annulus_argmin(heatmap, spec, k=3.):
    """Grid point with the smallest value inside the ring band.

    Returns:
        tuple: (x, y, angle) of the minimizing cell.
    """
    lo, hi = spec.band(k)
    yy, xx = torch.meshgrid(heatmap.ys, heatmap.xs, indexing='ij')
    radius = (xx**2 + yy**2).sqrt()
    mask = (radius >= lo) & (radius <= hi)
    if not mask.any():
        raise ValueError('The grid has no cell inside the ring band')
    masked = torch.where(
        mask, heatmap.values, torch.full_like(heatmap.values, math.inf)
    )
    idx = int(masked.reshape(-1).argmin())
    i, j = divmod(idx, heatmap.xs.numel())
    x, y = heatmap.xs[j].item(), heatmap.ys[i].item()
    return x, y, math.atan2(y, x) % (2 * math.pi)


def w_heatmap(snet, lam, t_grid, delta_grid):
    """Predicted guidance scale over (timestep, ||delta||).

    ``values[i][j] = w(t_grid[i], delta_grid[j], lam)``, i.e. rows follow the
    timestep and columns follow the delta norm.
    """
    t_grid = torch.as_tensor(t_grid, dtype=torch.float64).reshape(-1)
    delta_grid = torch.as_tensor(delta_grid, dtype=torch.float64).reshape(-1)
    if t_grid.numel() == 0 or delta_grid.numel() == 0:
        raise ValueError('Heatmap grids must be non-empty')
    if (t_grid < 1).any() or (t_grid > snet.num_steps).any():
        raise IndexError(
            'Timesteps must lie in [1, {}]'.format(snet.num_steps)
        )
    if (delta_grid < 0).any():
        raise ValueError('Delta norms must be non-negative')
    tt, dd = torch.meshgrid(t_grid, delta_grid, indexing='ij')
    w, _ = snet.forward_normalized(
        tt.reshape(-1) / snet.num_steps, dd.reshape(-1), lam
    )
    values = w.reshape(t_grid.numel(), delta_grid.numel())
    meta = {'kind': 'w', 'lambda': float(lam)}
    return Heatmap(delta_grid, t_grid, values, meta)


def default_w_grids(snet, size=32):
    """Timesteps 1..T and delta norms 0..delta_max, ``size`` points each."""
    t_grid = torch.linspace(1, snet.num_steps, size, dtype=torch.float64)
    delta_grid = torch.linspace(0, snet.delta_max, size, dtype=torch.float64)
    return t_grid, delta_grid
