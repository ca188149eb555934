from __future__ import division, print_function, absolute_import
import os
import csv
import math
import os.path as osp
import contextlib
from collections import namedtuple
import torch

from guidancelab.metrics import Heatmap
from guidancelab.utils import mkdir_if_missing

__all__ = [
    'TRAJ_FIELDS', 'HEATMAP_FIELDS', 'TrajectoryData', 'atomic_open',
    'save_trajectory_csv', 'load_trajectory_csv', 'save_heatmap_csv',
    'load_heatmap_csv', 'write_rows_csv'
]

TRAJ_FIELDS = ['t', 'z_x', 'z_y', 'w', 'delta_norm']
HEATMAP_FIELDS = ['i', 'j', 'x', 'y', 'value']

# what a trajectory CSV holds
TrajectoryData = namedtuple(
    'TrajectoryData', ['ts', 'zs', 'ws', 'delta_norms', 'z0', 't_end']
)


def _fmt(v):
    # repr is the shortest text that parses back to the same float
    if isinstance(v, float):
        return 'nan' if math.isnan(v) else repr(v)
    return str(v)


@contextlib.contextmanager
def atomic_open(fpath):
    """Writes to ``fpath + '.tmp'`` and renames it over ``fpath`` on success."""
    mkdir_if_missing(osp.dirname(fpath))
    tmp = fpath + '.tmp'
    try:
        with open(tmp, 'w', newline='') as f:
            yield f
        os.replace(tmp, fpath)
    finally:
        if osp.exists(tmp):
            os.remove(tmp)


def write_rows_csv(fpath, fieldnames, rows):
    """Writes dict rows; missing keys become empty cells."""
    with atomic_open(fpath) as f:
        writer = csv.DictWriter(
            f, fieldnames=fieldnames, extrasaction='ignore', lineterminator='\n'
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, '')) for k in fieldnames})
    return fpath


def save_trajectory_csv(traj, fpath):
    """Writes a trajectory with header ``t,z_x,z_y,w,delta_norm``.

    One row per step, then the endpoint row (t = 0 for diffusion, t = 1 for
    flows) whose ``w`` and ``delta_norm`` are ``nan``.
    """
    integral = not traj.ts.dtype.is_floating_point
    rows = []
    for t, z, w, d in zip(
        traj.ts.tolist(), traj.zs.tolist(), traj.ws.tolist(),
        traj.delta_norms.tolist()
    ):
        rows.append({'t': t, 'z_x': z[0], 'z_y': z[1], 'w': w, 'delta_norm': d})
    t_end = 0 if integral else 1.
    z0 = traj.z0.tolist()
    rows.append(
        {
            't': t_end,
            'z_x': z0[0],
            'z_y': z0[1],
            'w': float('nan'),
            'delta_norm': float('nan')
        }
    )
    return write_rows_csv(fpath, TRAJ_FIELDS, rows)


def _read_rows(fpath, fieldnames):
    if not osp.isfile(fpath):
        raise FileNotFoundError('File is not found at "{}"'.format(fpath))
    with open(fpath, 'r', newline='') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != fieldnames:
            raise ValueError(
                '"{}" has header {}, expected {}'.format(
                    fpath, reader.fieldnames, fieldnames
                )
            )
        return list(reader)


def load_trajectory_csv(fpath):
    """Reads a file written by :func:`save_trajectory_csv`.

    Returns:
        TrajectoryData
    """
    rows = _read_rows(fpath, TRAJ_FIELDS)
    if len(rows) < 2:
        raise ValueError('"{}" holds no sampling step'.format(fpath))
    steps, last = rows[:-1], rows[-1]
    integral = all(r['t'].lstrip('-').isdigit() for r in rows)
    parse_t = int if integral else float
    return TrajectoryData(
        torch.tensor(
            [parse_t(r['t']) for r in steps],
            dtype=torch.long if integral else torch.float64
        ),
        torch.tensor(
            [[float(r['z_x']), float(r['z_y'])] for r in steps],
            dtype=torch.float64
        ),
        torch.tensor([float(r['w']) for r in steps], dtype=torch.float64),
        torch.tensor(
            [float(r['delta_norm']) for r in steps], dtype=torch.float64
        ),
        torch.tensor(
            [float(last['z_x']), float(last['z_y'])], dtype=torch.float64
        ),
        parse_t(last['t']),
    )


def save_heatmap_csv(heatmap, fpath):
    """Long-format heatmap: one ``i,j,x,y,value`` row per cell."""
    rows = []
    xs, ys = heatmap.xs.tolist(), heatmap.ys.tolist()
    values = heatmap.values.tolist()
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            rows.append({'i': i, 'j': j, 'x': x, 'y': y, 'value': values[i][j]})
    return write_rows_csv(fpath, HEATMAP_FIELDS, rows)


def load_heatmap_csv(fpath):
    rows = _read_rows(fpath, HEATMAP_FIELDS)
    if not rows:
        raise ValueError('"{}" holds no heatmap cell'.format(fpath))
    n_rows = max(int(r['i']) for r in rows) + 1
    n_cols = max(int(r['j']) for r in rows) + 1
    if len(rows) != n_rows * n_cols:
        raise ValueError(
            '"{}" holds {} cells for a {}x{} grid'.format(
                fpath, len(rows), n_rows, n_cols
            )
        )
    xs = torch.zeros(n_cols, dtype=torch.float64)
    ys = torch.zeros(n_rows, dtype=torch.float64)
    values = torch.zeros((n_rows, n_cols), dtype=torch.float64)
    for r in rows:
        i, j = int(r['i']), int(r['j'])
        xs[j] = float(r['x'])
        ys[i] = float(r['y'])
        values[i, j] = float(r['value'])
    name = osp.splitext(osp.basename(fpath))[0]
    return Heatmap(xs, ys, values, {'name': name})
