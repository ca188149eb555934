from __future__ import division, print_function, absolute_import
import glob
import os.path as osp
import warnings
from concurrent.futures import ThreadPoolExecutor
import torch

from guidancelab.data import RingSpec, sample_condition
from guidancelab.default_config import metric_kwargs
from guidancelab.engine import train_flow_scheduler, train_scheduler
from guidancelab.guidance import (
    AVAI_MODES, AVAI_SAMPLERS, GuidanceMode, flow_guided_sample,
    sample_trajectory
)
from guidancelab.metrics import EvalReport, build_report
from guidancelab.metrics.toy import DEFAULT_TOL
from guidancelab.models import (
    DenoiserNet, load_backbone, scheduler_from_checkpoint
)
from guidancelab.utils import (
    SweepLogger, load_checkpoint, make_generator, params_digest, read_json,
    worker_count, write_json
)

from .io import load_trajectory_csv, save_trajectory_csv, write_rows_csv

__all__ = [
    'RunConfig', 'sample_many', 'evaluate_models', 'run_eval', 'evaluate_run',
    'sweep_variants', 'sweep', 'SWEEP_FIELDS', 'find_run_files'
]

SWEEP_FIELDS = ['name'] + EvalReport.FIELDS + ['error']

# keeps the target draws apart from the z_T stream of the same seed
COND_SEED_OFFSET = 1000003


class RunConfig(object):
    """Everything a sampling run needs besides the networks.

    Args:
        backbone (str): backbone checkpoint path.
        out (str): output directory.
        scheduler (str, optional): scheduler checkpoint, required by "anneal".
        mode (str, optional): "cfg", "cfgpp" or "anneal".
        sampler (str, optional): "ddim", "euler" or "euler-a" (diffusion only).
        c (float, optional): target angle.
        resample_c (bool, optional): draw a uniform target per trajectory
            instead of using ``c``.
        w (float, optional): constant guidance scale.
        lam (float, optional): lambda of annealing guidance.
        seeds (int, optional): number of trajectories.
        seed_base (int, optional): trajectory i uses seed ``seed_base + i``.
        strict (bool, optional): restrict "cfgpp" to w in [0, 1].
        flow_steps (int, optional): Euler steps of flow sampling.
        threads (int, optional): requested worker count, 0 for all cores.
        tol (float, optional): adherence tolerance.
        band_k (float, optional): width of the on-manifold band in sigma_r.
        n_bins (int, optional): coverage bins.
    """

    FIELDS = [
        'backbone', 'scheduler', 'mode', 'sampler', 'c', 'resample_c', 'w',
        'lam', 'seeds', 'seed_base', 'strict', 'flow_steps', 'tol', 'band_k',
        'n_bins'
    ]

    def __init__(
        self,
        backbone,
        out,
        scheduler='',
        mode='cfgpp',
        sampler='ddim',
        c=0.,
        resample_c=False,
        w=0.15,
        lam=0.7,
        seeds=200,
        seed_base=0,
        strict=False,
        flow_steps=100,
        threads=0,
        tol=None,
        band_k=3.,
        n_bins=16
    ):
        if mode not in AVAI_MODES:
            raise ValueError(
                'Unsupported mode: {}. Must be one of {}'.format(mode, AVAI_MODES)
            )
        if sampler not in AVAI_SAMPLERS:
            raise ValueError(
                'Unsupported sampler: {}. Must be one of {}'.format(
                    sampler, AVAI_SAMPLERS
                )
            )
        if seeds < 1:
            raise ValueError('seeds must be >= 1, but got {}'.format(seeds))
        self.backbone = backbone
        self.out = out
        self.scheduler = scheduler or ''
        self.mode = mode
        self.sampler = sampler
        self.c = float(c)
        self.resample_c = bool(resample_c)
        self.w = float(w)
        self.lam = float(lam)
        self.seeds = int(seeds)
        self.seed_base = int(seed_base)
        self.strict = bool(strict)
        self.flow_steps = int(flow_steps)
        self.threads = int(threads)
        self.tol = DEFAULT_TOL if tol is None else float(tol)
        self.band_k = float(band_k)
        self.n_bins = int(n_bins)

    @classmethod
    def from_cfg(cls, cfg, backbone, out, scheduler='', **overrides):
        """Reads the ``sample``, ``flow`` and ``eval`` nodes; keyword
        arguments replace single fields."""
        kwargs = {
            'mode': cfg.sample.mode,
            'sampler': cfg.sample.sampler,
            'c': cfg.sample.c,
            'resample_c': cfg.sample.resample_c,
            'w': cfg.sample.w,
            'lam': cfg.sample.lam,
            'seeds': cfg.sample.seeds,
            'seed_base': cfg.sample.seed_base,
            'strict': cfg.sample.strict,
            'flow_steps': cfg.flow.sample_steps,
            'threads': cfg.sample.threads
        }
        kwargs.update(metric_kwargs(cfg))
        kwargs.update(overrides)
        return cls(backbone, out, scheduler=scheduler, **kwargs)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}

    def guidance_mode(self, snet=None):
        if self.mode == 'anneal':
            return GuidanceMode.annealing(snet, self.lam)
        if self.mode == 'cfgpp':
            return GuidanceMode.cfgpp(self.w, strict=self.strict)
        return GuidanceMode.cfg(self.w)

    def target(self, seed):
        """Target angle of the trajectory with seed ``seed``."""
        if not self.resample_c:
            return self.c
        return sample_condition(make_generator(seed + COND_SEED_OFFSET))


def sample_many(backbone, mode, run_cfg):
    """Samples ``run_cfg.seeds`` trajectories, one seed each.

    Trajectory i only depends on seed ``seed_base + i``, so adding seeds never
    changes earlier trajectories, and the same holds for resampled targets.
    Trajectories are fanned out over threads.
    """
    seeds = [run_cfg.seed_base + i for i in range(run_cfg.seeds)]
    if isinstance(backbone, DenoiserNet):

        def job(seed):
            return sample_trajectory(
                backbone, mode, run_cfg.sampler, run_cfg.target(seed),
                backbone.schedule, seed
            )

    else:

        def job(seed):
            return flow_guided_sample(
                backbone, mode, run_cfg.target(seed), run_cfg.flow_steps, seed
            )

    n_workers = worker_count(run_cfg.threads or None)
    if n_workers == 1:
        return [job(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=n_workers) as executor:
        return list(executor.map(job, seeds))


def _report(label, trajs, spec, run_cfg):
    endpoints = torch.stack([tr.z0 for tr in trajs])
    conds = torch.tensor([tr.cond for tr in trajs], dtype=torch.float64)
    ws = torch.cat([tr.ws.reshape(-1) for tr in trajs])
    return build_report(
        label, endpoints, conds, ws, spec, run_cfg.tol, run_cfg.band_k,
        run_cfg.n_bins
    )


def evaluate_models(backbone, run_cfg, snet=None, label=None):
    """Samples and scores in memory.

    Returns:
        tuple: :class:`EvalReport` and the list of trajectories.
    """
    mode = run_cfg.guidance_mode(snet)
    trajs = sample_many(backbone, mode, run_cfg)
    return _report(label or mode.label, trajs, backbone.spec, run_cfg), trajs


def _check_pair(backbone, snet, scheduler_path):
    expected = snet.meta().get('num_steps')
    if isinstance(backbone, DenoiserNet) and expected != backbone.schedule.T:
        raise ValueError(
            'Scheduler "{}" was trained for T={}, backbone uses T={}'.format(
                scheduler_path, expected, backbone.schedule.T
            )
        )


def run_eval(run_cfg):
    """Samples a run, writes its files and returns the report.

    Layout of ``run_cfg.out``: ``run.json`` (config and per-trajectory seeds),
    ``traj_<i>.csv`` and ``report.json``.
    """
    if run_cfg.mode == 'anneal' and not run_cfg.scheduler:
        raise ValueError('Mode "anneal" requires a scheduler checkpoint')
    backbone = load_backbone(run_cfg.backbone)
    snet = None
    if run_cfg.mode == 'anneal':
        state = load_checkpoint(run_cfg.scheduler)
        snet = scheduler_from_checkpoint(state)
        _check_pair(backbone, snet, run_cfg.scheduler)
        meta = state['meta']
        if meta.get('backbone_hash') not in (None, params_digest(backbone)):
            warnings.warn(
                'Scheduler "{}" was trained against another backbone'.format(
                    run_cfg.scheduler
                )
            )

    report, trajs = evaluate_models(backbone, run_cfg, snet)
    print('=> {}'.format(report))

    run_info = run_cfg.to_dict()
    run_info['ring'] = backbone.spec.to_dict()
    run_info['kind'] = 'denoiser' if isinstance(backbone, DenoiserNet) \
        else 'velocity'
    run_info['trajectories'] = []
    for i, tr in enumerate(trajs):
        fname = 'traj_{}.csv'.format(i)
        save_trajectory_csv(tr, osp.join(run_cfg.out, fname))
        info = tr.meta()
        info['file'] = fname
        run_info['trajectories'].append(info)
    write_json(run_info, osp.join(run_cfg.out, 'run.json'))
    write_json(report.to_dict(), osp.join(run_cfg.out, 'report.json'))
    return report


def evaluate_run(run_dir):
    """Recomputes ``report.json`` of a run from its exported files."""
    run_info = read_json(osp.join(run_dir, 'run.json'))
    entries = run_info['trajectories']
    if not entries:
        raise ValueError('Run "{}" holds no trajectory'.format(run_dir))
    spec = RingSpec.from_dict(run_info['ring'])
    datas = [load_trajectory_csv(osp.join(run_dir, e['file'])) for e in entries]
    endpoints = torch.stack([d.z0 for d in datas])
    conds = torch.tensor([e['c'] for e in entries], dtype=torch.float64)
    ws = torch.cat([d.ws for d in datas])
    label = entries[0]['mode']
    report = build_report(
        label, endpoints, conds, ws, spec, run_info['tol'], run_info['band_k'],
        run_info['n_bins']
    )
    write_json(report.to_dict(), osp.join(run_dir, 'report.json'))
    return report


def sweep_variants(cfg):
    """Variant list of a sweep: a named preset or ``cfg.sweep.variants``."""
    preset = cfg.sweep.preset
    if preset == 'ablation':
        return [
            {'name': 'full'},
            {'name': 'w/o t', 'ablation': {'use_t': False}},
            {'name': 'w/o delta', 'ablation': {'use_delta_norm': False}},
            {'name': 'constrained w', 'ablation': {'constrain_w': True}},
            {'name': 'w/o renoise', 'ablation': {'use_cfgpp_renoise': False}},
            {
                'name': 'w/o perturbation',
                'ablation': {'use_perturbation': False}
            },
        ]
    if preset == 'noise_scale':
        return [
            {'name': 's={}'.format(s), 'perturb_s': s}
            for s in (0., 0.025, 0.1, 0.25)
        ]
    if preset:
        raise ValueError(
            'Unknown sweep preset: {}. Must be "ablation" or "noise_scale"'.
            format(preset)
        )
    variants = list(cfg.sweep.variants)
    if not variants:
        raise ValueError('Sweep needs a preset or a list of variants')
    return [dict(v) for v in variants]


def _variant_cfg(cfg, variant):
    vcfg = cfg.clone()
    vcfg.defrost()
    for k, v in dict(variant.get('ablation', {})).items():
        if k not in vcfg.ablation:
            raise KeyError('Unknown ablation flag: {}'.format(k))
        vcfg.ablation[k] = bool(v)
    if 'perturb_s' in variant:
        vcfg.perturb.s = float(variant['perturb_s'])
    return vcfg


def sweep(cfg, out_csv, backbone=None):
    """Trains / evaluates every variant and writes one CSV row per variant.

    A failing variant gets its message in the ``error`` column and the sweep
    goes on.
    """
    if backbone is None:
        if not cfg.sweep.backbone:
            raise ValueError('sweep.backbone must name a backbone checkpoint')
        backbone = load_backbone(cfg.sweep.backbone)
    variants = sweep_variants(cfg)
    sweeplogger = SweepLogger()
    rows = []
    for variant in variants:
        name = variant.get('name') or 'variant{}'.format(len(rows))
        print('##### Sweep variant: {} #####'.format(name))
        try:
            vcfg = _variant_cfg(cfg, variant)
            mode = variant.get('mode', 'anneal')
            run_cfg = RunConfig.from_cfg(
                vcfg,
                cfg.sweep.backbone,
                '',
                mode=mode,
                w=variant.get('w', vcfg.sample.w),
                lam=variant.get('lam', cfg.sweep.lam)
            )
            snet = None
            if mode == 'anneal':
                if isinstance(backbone, DenoiserNet):
                    snet = train_scheduler(vcfg, backbone)
                else:
                    snet = train_flow_scheduler(vcfg, backbone)
            report, _ = evaluate_models(backbone, run_cfg, snet, label=name)
            row = report.to_dict()
            row['error'] = ''
            sweeplogger.write(
                name, report.adherence_rate, report.on_manifold_rate
            )
        except Exception as e:
            row = {'label': name, 'error': '{}: {}'.format(type(e).__name__, e)}
            sweeplogger.write(name, error=row['error'])
        row['name'] = name
        rows.append(row)

    sweeplogger.show_summary()
    write_rows_csv(out_csv, SWEEP_FIELDS, rows)
    return rows


def find_run_files(run_dir):
    """Trajectory and heatmap CSVs of a run directory, sorted."""

    def _key(p):
        stem = osp.splitext(osp.basename(p))[0]
        suffix = stem.rsplit('_', 1)[-1]
        return (int(suffix) if suffix.isdigit() else -1, p)

    trajs = sorted(glob.glob(osp.join(run_dir, 'traj_*.csv')), key=_key)
    heatmaps = sorted(
        glob.glob(osp.join(run_dir, 'heatmap*.csv')) +
        glob.glob(osp.join(run_dir, 'whmap*.csv'))
    )
    return trajs, heatmaps
