from __future__ import division, absolute_import
import os
import math
import os.path as osp
import numpy as np
import matplotlib

matplotlib.use('Agg')
from matplotlib import patches  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from guidancelab.data import RingSpec  # noqa: E402
from guidancelab.utils import mkdir_if_missing, read_json  # noqa: E402

from .io import load_heatmap_csv, load_trajectory_csv  # noqa: E402
from .runner import find_run_files  # noqa: E402

__all__ = ['scatter_figure', 'w_figure', 'heatmap_figure', 'export_plots']

GRAY = '#888888'


def _new_axes(figsize=(5, 5)):
    fig = Figure(figsize=figsize)
    return fig, fig.add_subplot(1, 1, 1)


def scatter_figure(endpoints, spec, conds=(), tol=math.pi / 64, k=3.):
    """Endpoints over the ring band (dashed circles) and the adherence
    wedge ``c +- tol`` of every distinct target angle."""
    fig, ax = _new_axes()
    lo, hi = spec.band(k)
    for r in (lo, spec.mu_r, hi):
        ax.add_patch(
            patches.Circle(
                (0, 0),
                r,
                fill=False,
                ls='--' if r != spec.mu_r else '-',
                ec=GRAY,
                lw=0.8
            )
        )
    for c in sorted(set(round(float(c), 12) for c in conds)):
        ax.add_patch(
            patches.Wedge(
                (0, 0),
                hi,
                math.degrees(c - tol),
                math.degrees(c + tol),
                width=hi - lo,
                fc='tab:orange',
                alpha=0.3
            )
        )
    pts = np.asarray(endpoints, dtype=np.float64).reshape(-1, 2)
    ax.scatter(pts[:, 0], pts[:, 1], s=6, c='tab:blue')
    lim = max(hi, float(np.abs(pts).max()) if pts.size else hi) * 1.1
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect('equal')
    ax.set_title('endpoints (n={})'.format(len(pts)))
    return fig


def w_figure(trajectories):
    """One polyline of w against the step time per trajectory."""
    fig, ax = _new_axes((6, 4))
    for data in trajectories:
        ax.plot(
            np.asarray(data.ts, dtype=np.float64),
            np.asarray(data.ws, dtype=np.float64),
            lw=0.8
        )
    ax.set_xlabel('t')
    ax.set_ylabel('w')
    ax.set_title('guidance scale ({} trajectories)'.format(len(trajectories)))
    return fig


def heatmap_figure(heatmap, title=None):
    """Linear-colormap rendering, one mesh cell per heatmap value."""
    fig, ax = _new_axes((6, 5))
    values = np.asarray(heatmap.values, dtype=np.float64)
    mesh = ax.pcolormesh(
        np.asarray(heatmap.xs, dtype=np.float64),
        np.asarray(heatmap.ys, dtype=np.float64),
        values,
        shading='nearest',
        cmap='viridis'
    )
    fig.colorbar(mesh, ax=ax)
    ax.set_title(title or heatmap.meta.get('name', 'heatmap'))
    ax.text(
        0.01,
        -0.12,
        'min {:.4g}  max {:.4g}'.format(values.min(), values.max()),
        transform=ax.transAxes
    )
    return fig


def _save(fig, fpath):
    tmp = fpath + '.tmp'
    try:
        fig.savefig(tmp, format='svg')
        os.replace(tmp, fpath)
    finally:
        if osp.exists(tmp):
            os.remove(tmp)


def export_plots(run_dir):
    """Renders every CSV of a run directory into ``<run_dir>/plots/*.svg``.

    All figures are built before the first file is written, so missing or
    broken inputs leave no partial output.

    Returns:
        list: paths of the written SVG files.
    """
    if not osp.isdir(run_dir):
        raise FileNotFoundError('Run directory "{}" is not found'.format(run_dir))
    traj_files, heatmap_files = find_run_files(run_dir)
    if not traj_files and not heatmap_files:
        raise FileNotFoundError(
            'No trajectory or heatmap CSV found in "{}"'.format(run_dir)
        )

    figures = {}
    if traj_files:
        run_json = osp.join(run_dir, 'run.json')
        if not osp.isfile(run_json):
            raise FileNotFoundError('File is not found at "{}"'.format(run_json))
        run_info = read_json(run_json)
        datas = [load_trajectory_csv(f) for f in traj_files]
        conds = [e['c'] for e in run_info.get('trajectories', [])]
        figures['endpoints'] = scatter_figure(
            np.stack([d.z0.numpy() for d in datas]),
            RingSpec.from_dict(run_info['ring']),
            conds,
            tol=run_info.get('tol', math.pi / 64),
            k=run_info.get('band_k', 3.)
        )
        figures['w'] = w_figure(datas)
    for fpath in heatmap_files:
        heatmap = load_heatmap_csv(fpath)
        figures[heatmap.meta['name']] = heatmap_figure(heatmap)

    out_dir = osp.join(run_dir, 'plots')
    mkdir_if_missing(out_dir)
    written = []
    for name, fig in figures.items():
        fpath = osp.join(out_dir, name + '.svg')
        _save(fig, fpath)
        written.append(fpath)
    print('=> Plots saved to "{}"'.format(out_dir))
    return written
