from __future__ import division, print_function, absolute_import
import math
import torch

from guidancelab.data import angular_distance, wrap_angle

__all__ = [
    'EvalReport', 'endpoint_angles', 'adherence_rate', 'on_manifold_rate',
    'coverage', 'build_report'
]

DEFAULT_TOL = math.pi / 64


def _points(endpoints):
    pts = torch.as_tensor(endpoints, dtype=torch.float64).reshape(-1, 2)
    if pts.size(0) == 0:
        raise ValueError('Cannot evaluate an empty set of endpoints')
    return pts


def endpoint_angles(endpoints):
    """Canonical angles atan2(y, x) of points (n, 2)."""
    pts = _points(endpoints)
    return wrap_angle(torch.atan2(pts[:, 1], pts[:, 0]))


def adherence_rate(endpoints, c, tol=DEFAULT_TOL):
    """Fraction of endpoints within angular distance ``tol`` of ``c``.

    Args:
        endpoints (torch.Tensor): points (n, 2).
        c (float or torch.Tensor): target angle, or one angle per point.
        tol (float, optional): tolerance. Default is pi/64.

    Examples::
        >>> from guidancelab import metrics
        >>> metrics.adherence_rate(z0s, 3 * math.pi / 4)
    """
    dist = angular_distance(endpoint_angles(endpoints), c)
    dist = torch.as_tensor(dist, dtype=torch.float64).reshape(-1)
    return (dist <= tol).to(torch.float64).mean().item()


def on_manifold_rate(endpoints, spec, k=3.):
    """Fraction of endpoints with radius in ``[mu_r - k sigma_r, mu_r + k sigma_r]``."""
    lo, hi = spec.band(k)
    radius = _points(endpoints).norm(dim=1)
    return ((radius >= lo) & (radius <= hi)).to(torch.float64).mean().item()


def coverage(endpoints, conds, tol=DEFAULT_TOL, n_bins=16):
    """Occupied fraction of the adherence band.

    The band ``[c - tol, c + tol]`` is split into ``n_bins`` equal bins and
    every endpoint is placed by its angle relative to its own target, so
    trajectories with different targets share one histogram.

    Returns:
        float: occupied bins / n_bins.
    """
    if n_bins < 1:
        raise ValueError('n_bins must be >= 1, but got {}'.format(n_bins))
    angles = endpoint_angles(endpoints)
    conds = torch.as_tensor(conds, dtype=torch.float64).reshape(-1)
    # signed offset in [-pi, pi)
    rel = torch.remainder(angles - conds + math.pi, 2 * math.pi) - math.pi
    inside = rel.abs() <= tol
    if not inside.any():
        return 0.
    idx = ((rel[inside] + tol) / (2 * tol) * n_bins).floor().long()
    idx = idx.clamp(0, n_bins - 1)
    return torch.unique(idx).numel() / n_bins


class EvalReport(object):
    """Adherence / on-manifold / coverage statistics of a trajectory batch.

    Attributes:
        label (str): method label, e.g. "cfgpp(w=0.15)".
        n_samples (int): number of trajectories.
        adherence_rate (float): fraction within the angular tolerance.
        on_manifold_rate (float): fraction within the radial band.
        coverage (float): occupied-bin fraction of the adherence band.
        mean_w (float): mean guidance scale over all steps and trajectories.
    """

    FIELDS = [
        'label', 'n_samples', 'adherence_rate', 'on_manifold_rate', 'coverage',
        'mean_w'
    ]

    def __init__(
        self, label, n_samples, adherence_rate, on_manifold_rate, coverage,
        mean_w
    ):
        for name, v in [
            ('adherence_rate', adherence_rate),
            ('on_manifold_rate', on_manifold_rate), ('coverage', coverage)
        ]:
            if not 0 <= v <= 1:
                raise ValueError('{} must lie in [0, 1], but got {}'.format(name, v))
        self.label = label
        self.n_samples = int(n_samples)
        self.adherence_rate = float(adherence_rate)
        self.on_manifold_rate = float(on_manifold_rate)
        self.coverage = float(coverage)
        self.mean_w = float(mean_w)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}

    @classmethod
    def from_dict(cls, d):
        return cls(*[d[k] for k in cls.FIELDS])

    def __repr__(self):
        return (
            '{} (n={}): adherence {:.1%}, on-manifold {:.1%}, '
            'coverage {:.1%}, mean w {:.4f}'.format(
                self.label, self.n_samples, self.adherence_rate,
                self.on_manifold_rate, self.coverage, self.mean_w
            )
        )


def build_report(
    label, endpoints, conds, ws, spec, tol=DEFAULT_TOL, band_k=3., n_bins=16
):
    """Computes an :class:`EvalReport`.

    Args:
        label (str): method label.
        endpoints (torch.Tensor): final points (n, 2).
        conds (torch.Tensor): target angle per trajectory (n,).
        ws (torch.Tensor): every emitted guidance scale.
        spec (RingSpec): ring of the on-manifold band.
    """
    endpoints = _points(endpoints)
    ws = torch.as_tensor(ws, dtype=torch.float64).reshape(-1)
    return EvalReport(
        label,
        endpoints.size(0),
        adherence_rate(endpoints, conds, tol),
        on_manifold_rate(endpoints, spec, band_k),
        coverage(endpoints, conds, tol, n_bins),
        ws.mean().item() if ws.numel() else float('nan')
    )
