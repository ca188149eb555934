from __future__ import division, absolute_import
import torch

from guidancelab.data import COND_DIM, embed_condition

__all__ = ['compute_delta', 'cfg_combine', 'guidance_pair', 'null_embedding']


def null_embedding(n=None):
    shape = (COND_DIM, ) if n is None else (n, COND_DIM)
    return torch.zeros(shape, dtype=torch.float64)


def guidance_pair(backbone, x, t, c_emb):
    """Conditional and unconditional predictions for a batch.

    Args:
        backbone (DenoiserNet or VelocityNet): frozen model.
        x (torch.Tensor): points (n, 2).
        t: timestep(s).
        c_emb (torch.Tensor): condition embeddings (n, 3) or (3,).

    Returns:
        tuple: (out_c, tape_c, out_null, tape_null).
    """
    out_c, tape_c = backbone.forward_embedded(x, t, c_emb)
    out_null, tape_null = backbone.forward_embedded(
        x, t, null_embedding(x.size(0))
    )
    return out_c, tape_c, out_null, tape_null


def compute_delta(dnet, z, t, cond):
    """delta_t = eps^c(z_t) - eps^null(z_t) for one point.

    Returns:
        tuple: (delta, eps_c, eps_null), each of shape (2,).
    """
    if cond is None:
        raise ValueError('compute_delta needs a non-null condition')
    z = torch.as_tensor(z, dtype=torch.float64).reshape(1, -1)
    eps_c, _, eps_null, _ = guidance_pair(dnet, z, t, embed_condition(cond))
    eps_c, eps_null = eps_c[0], eps_null[0]
    return eps_c - eps_null, eps_c, eps_null


def cfg_combine(eps_null, eps_c, w):
    """Guided prediction ``eps_null + w * (eps_c - eps_null)``.

    ``w`` may be a scalar or a tensor of per-row scales.
    """
    w = torch.as_tensor(w, dtype=torch.float64)
    if w.dim() == 1 and eps_c.dim() == 2:
        w = w.unsqueeze(1)
    return eps_null + w * (eps_c - eps_null)
