from __future__ import division, absolute_import
import math
import torch

__all__ = ['sinusoidal_embed']


def sinusoidal_embed(x, dim):
    """Sinusoidal features of a [0, 1]-normalized scalar.

    With ``half = dim // 2`` and frequencies ``pi * 2**k`` (k = 0..half-1) the
    result is ``[sin(w_0 x) .. sin(w_{half-1} x), cos(w_0 x) .. cos(w_{half-1} x)]``.

    Args:
        x (float or torch.Tensor): scalar or tensor of any shape.
        dim (int): even embedding width.

    Returns:
        torch.Tensor: shape ``x.shape + (dim,)``.
    """
    if int(dim) != dim or dim <= 0 or dim % 2 != 0:
        raise ValueError(
            'Embedding dim must be a positive even integer, but got {}'.format(
                dim
            )
        )
    x = torch.as_tensor(x, dtype=torch.float64)
    half = int(dim) // 2
    freqs = math.pi * torch.pow(
        2., torch.arange(half, dtype=torch.float64)
    )
    args = x.unsqueeze(-1) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
