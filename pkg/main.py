import sys
import time
import os.path as osp
import argparse

import guidancelab
from guidancelab.default_config import load_config
from guidancelab.engine import (
    backbone_meta, scheduler_meta, train_denoiser, train_flow_scheduler,
    train_scheduler, train_velocity
)
from guidancelab.evaluation import (
    RunConfig, evaluate_run, export_plots, run_eval, save_heatmap_csv, sweep
)
from guidancelab.metrics import (
    annulus_argmin, default_w_grids, delta_norm_heatmap, w_heatmap
)
from guidancelab.models import DenoiserNet, load_backbone, load_scheduler
from guidancelab.utils import (
    Logger, collect_env_info, mkdir_if_missing, save_checkpoint,
    set_random_seed
)


def reset_config(cfg, args):
    """Copies explicit command-line flags into their config keys."""
    cfg.defrost()
    if args.command == 'train-scheduler':
        if args.no_t:
            cfg.ablation.use_t = False
        if args.no_delta:
            cfg.ablation.use_delta_norm = False
        if args.constrain_w:
            cfg.ablation.constrain_w = True
        if args.no_renoise:
            cfg.ablation.use_cfgpp_renoise = False
        if args.no_perturb:
            cfg.ablation.use_perturbation = False
        if args.perturb_s is not None:
            cfg.perturb.s = args.perturb_s
    if args.command == 'sample':
        for key in ('mode', 'sampler', 'c', 'w', 'seeds', 'seed_base'):
            value = getattr(args, key)
            if value is not None:
                cfg.sample[key] = value
        if args.lam is not None:
            cfg.sample.lam = args.lam
        if args.strict:
            cfg.sample.strict = True
        if args.resample_c:
            cfg.sample.resample_c = True
        if args.flow_steps is not None:
            cfg.flow.sample_steps = args.flow_steps
    if args.command == 'sweep' and args.backbone:
        cfg.sweep.backbone = args.backbone
    cfg.freeze()


def setup_logging(args, log_dir):
    log_name = args.command + '.log' + time.strftime('-%Y-%m-%d-%H-%M-%S')
    sys.stdout = Logger(osp.join(log_dir or '.', log_name))


def show_config(cfg):
    print('Show configuration\n{}\n'.format(cfg))
    print('Collecting env info ...')
    print('** System info **\n{}\n'.format(collect_env_info()))


def cmd_train_denoiser(cfg, args):
    setup_logging(args, osp.dirname(args.out))
    show_config(cfg)
    set_random_seed(cfg.backbone.seed)
    dnet = train_denoiser(cfg, save_dir=args.save_dir)
    save_checkpoint(
        dnet.net, args.out, 'denoiser', backbone_meta(dnet, cfg.backbone)
    )


def cmd_train_flow(cfg, args):
    setup_logging(args, osp.dirname(args.out))
    show_config(cfg)
    set_random_seed(cfg.flow.seed)
    vnet = train_velocity(cfg, save_dir=args.save_dir)
    save_checkpoint(vnet.net, args.out, 'velocity', backbone_meta(vnet, cfg.flow))


def cmd_train_scheduler(cfg, args):
    setup_logging(args, osp.dirname(args.out))
    show_config(cfg)
    set_random_seed(cfg.scheduler.seed)
    backbone = load_backbone(args.backbone)
    if isinstance(backbone, DenoiserNet):
        snet = train_scheduler(cfg, backbone, save_dir=args.save_dir)
    else:
        snet = train_flow_scheduler(cfg, backbone, save_dir=args.save_dir)
    save_checkpoint(
        snet.net, args.out, 'scheduler', scheduler_meta(snet, cfg, backbone)
    )


def cmd_sample(cfg, args):
    mkdir_if_missing(args.out)
    setup_logging(args, args.out)
    run_cfg = RunConfig.from_cfg(
        cfg, args.backbone, args.out, scheduler=args.scheduler
    )
    run_eval(run_cfg)


def cmd_eval(cfg, args):
    print('=> {}'.format(evaluate_run(args.run)))


def cmd_heatmap(cfg, args):
    backbone = load_backbone(args.backbone)
    t = args.t
    if isinstance(backbone, DenoiserNet):
        if t != int(t):
            raise ValueError('--t must be an integer timestep, but got {}'.format(t))
        t = int(t)
    heatmap = delta_norm_heatmap(
        backbone, t, args.c, cfg.eval.heatmap_size, cfg.eval.heatmap_extent
    )
    save_heatmap_csv(heatmap, args.out)
    x, y, angle = annulus_argmin(heatmap, backbone.spec, cfg.eval.band_k)
    print(
        '=> Smallest ||delta|| on the ring at ({:.4f}, {:.4f}), '
        'angle {:.4f} (target {:.4f})'.format(x, y, angle, args.c)
    )


def cmd_whmap(cfg, args):
    snet = load_scheduler(args.scheduler)
    t_grid, delta_grid = default_w_grids(snet, cfg.eval.whmap_size)
    heatmap = w_heatmap(snet, args.lam, t_grid, delta_grid)
    save_heatmap_csv(heatmap, args.out)
    print('=> w heatmap saved to "{}"'.format(args.out))


def cmd_sweep(cfg, args):
    setup_logging(args, osp.dirname(args.out))
    show_config(cfg)
    sweep(cfg, args.out)


def cmd_plot(cfg, args):
    export_plots(args.run)


COMMANDS = {
    'train-denoiser': cmd_train_denoiser,
    'train-flow': cmd_train_flow,
    'train-scheduler': cmd_train_scheduler,
    'sample': cmd_sample,
    'eval': cmd_eval,
    'heatmap': cmd_heatmap,
    'whmap': cmd_whmap,
    'sweep': cmd_sweep,
    'plot': cmd_plot,
}


def build_parser():
    parser = argparse.ArgumentParser(
        description=guidancelab.__description__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    def add_command(name, help):
        sub = subparsers.add_parser(
            name,
            help=help,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        sub.add_argument(
            '--config', type=str, default='', help='path to JSON config file'
        )
        return sub

    for name, what in [
        ('train-denoiser', 'noise predictor'), ('train-flow', 'velocity field')
    ]:
        sub = add_command(name, 'train the conditional {}'.format(what))
        sub.add_argument('--out', type=str, required=True, help='checkpoint path')
        sub.add_argument(
            '--save-dir', type=str, default=None, help='TensorBoard directory'
        )

    sub = add_command('train-scheduler', 'train the guidance-scale scheduler')
    sub.add_argument('--backbone', type=str, required=True, help='backbone checkpoint')
    sub.add_argument('--out', type=str, required=True, help='checkpoint path')
    sub.add_argument('--save-dir', type=str, default=None, help='TensorBoard directory')
    sub.add_argument('--no-t', action='store_true', help='drop the timestep input')
    sub.add_argument('--no-delta', action='store_true', help='drop the ||delta|| input')
    sub.add_argument('--constrain-w', action='store_true', help='squash w into (0, 1)')
    sub.add_argument(
        '--no-renoise',
        action='store_true',
        help='renoise with the guided prediction'
    )
    sub.add_argument(
        '--no-perturb', action='store_true', help='no condition perturbation'
    )
    sub.add_argument('--perturb-s', type=float, default=None, help='perturbation scale')

    sub = add_command('sample', 'sample guided trajectories and score them')
    sub.add_argument('--backbone', type=str, required=True, help='backbone checkpoint')
    sub.add_argument('--scheduler', type=str, default='', help='scheduler checkpoint')
    sub.add_argument('--mode', type=str, default=None, help='cfg, cfgpp or anneal')
    sub.add_argument('--sampler', type=str, default=None, help='ddim, euler or euler-a')
    sub.add_argument('--c', type=float, default=None, help='target angle (radians)')
    sub.add_argument(
        '--resample-c',
        action='store_true',
        help='draw the target of every trajectory from its seed'
    )
    scale = sub.add_mutually_exclusive_group()
    scale.add_argument('--w', type=float, default=None, help='constant guidance scale')
    scale.add_argument(
        '--lambda', dest='lam', type=float, default=None, help='annealing lambda'
    )
    sub.add_argument('--seeds', type=int, default=None, help='number of trajectories')
    sub.add_argument('--seed-base', type=int, default=None, help='seed of trajectory 0')
    sub.add_argument('--strict', action='store_true', help='restrict cfgpp to w in [0, 1]')
    sub.add_argument(
        '--flow-steps', type=int, default=None, help='Euler steps of flow sampling'
    )
    sub.add_argument('--out', type=str, required=True, help='run directory')

    sub = add_command('eval', 'recompute the report of a run directory')
    sub.add_argument('--run', type=str, required=True, help='run directory')

    sub = add_command('heatmap', 'log ||delta|| over the plane')
    sub.add_argument('--backbone', type=str, required=True, help='backbone checkpoint')
    sub.add_argument('--t', type=float, required=True, help='timestep (flow: time in [0, 1])')
    sub.add_argument('--c', type=float, required=True, help='target angle (radians)')
    sub.add_argument('--out', type=str, required=True, help='heatmap CSV')

    sub = add_command('whmap', 'w over (timestep, ||delta||)')
    sub.add_argument('--scheduler', type=str, required=True, help='scheduler checkpoint')
    sub.add_argument(
        '--lambda', dest='lam', type=float, required=True, help='annealing lambda'
    )
    sub.add_argument('--out', type=str, required=True, help='heatmap CSV')

    sub = add_command('sweep', 'evaluate a list of variants')
    sub.add_argument('--backbone', type=str, default='', help='backbone checkpoint')
    sub.add_argument('--out', type=str, required=True, help='result CSV')

    sub = add_command('plot', 'render the CSVs of a run directory as SVG')
    sub.add_argument('--run', type=str, required=True, help='run directory')

    for sub in subparsers.choices.values():
        sub.add_argument(
            'opts',
            default=None,
            nargs=argparse.REMAINDER,
            help='Modify config options using the command-line'
        )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    console = sys.stdout
    try:
        cfg = load_config(args.config, args.opts)
        reset_config(cfg, args)
        COMMANDS[args.command](cfg, args)
    except Exception as e:
        message = ' '.join(str(e).split()) or type(e).__name__
        print('error: {}'.format(message), file=sys.stderr)
        return 1
    finally:
        if sys.stdout is not console:
            sys.stdout.close()
            sys.stdout = console
    return 0


if __name__ == '__main__':
    sys.exit(main())
