import math
from yacs.config import CfgNode as CN


def get_default_config():
    cfg = CN()

    # diffusion schedule
    cfg.schedule = CN()
    cfg.schedule.kind = 'linear' # linear or scaled_linear
    cfg.schedule.T = 50 # number of diffusion steps
    cfg.schedule.beta_start = 1e-4
    cfg.schedule.beta_end = 0.02

    # toy data
    cfg.ring = CN()
    cfg.ring.mu_r = 1.0 # mean radius
    cfg.ring.sigma_r = 0.1 # radial std
    cfg.ring.sigma_theta = math.pi / 128 # angular std of p(z|c)

    # noise predictor
    cfg.backbone = CN()
    cfg.backbone.hidden_dims = [64, 64, 64]
    cfg.backbone.t_embed_dim = 8 # width of the time embedding
    cfg.backbone.num_samples = 100000 # dataset size
    cfg.backbone.batch_size = 256
    cfg.backbone.steps = 20000 # optimizer updates
    cfg.backbone.optim = 'adamw'
    cfg.backbone.lr = 1e-3
    cfg.backbone.weight_decay = 0.01
    cfg.backbone.p_uncond = 0.1 # probability of training on the null condition
    cfg.backbone.seed = 0
    cfg.backbone.print_freq = 1000

    # velocity field
    cfg.flow = CN()
    cfg.flow.hidden_dims = [64, 64, 64]
    cfg.flow.t_embed_dim = 8
    cfg.flow.num_samples = 100000
    cfg.flow.batch_size = 256
    cfg.flow.steps = 20000
    cfg.flow.optim = 'adamw'
    cfg.flow.lr = 1e-3
    cfg.flow.weight_decay = 0.01
    cfg.flow.p_uncond = 0.1
    cfg.flow.seed = 0
    cfg.flow.print_freq = 1000
    cfg.flow.sample_steps = 100 # Euler steps used to integrate the flow

    # guidance-scale scheduler
    cfg.scheduler = CN()
    cfg.scheduler.hidden_dims = [128, 128, 128]
    cfg.scheduler.num_samples = 100000 # size of the (z0, c) pool
    cfg.scheduler.steps = 20000 # optimizer updates
    cfg.scheduler.batch_size = 2 # micro-batch size
    cfg.scheduler.accum_steps = 8 # micro-batches summed per update
    cfg.scheduler.optim = 'adamw'
    cfg.scheduler.lr = 1e-3
    cfg.scheduler.weight_decay = 0.01
    cfg.scheduler.seed = 0
    cfg.scheduler.print_freq = 1000
    cfg.scheduler.lambda_fixed = -1.0 # train with this lambda; negative samples U[0, 1]
    cfg.scheduler.delta_max = 0.0 # normalization of ||delta||; <= 0 estimates it from the backbone
    cfg.scheduler.delta_draws = 10000 # draws of the delta_max estimate
    cfg.scheduler.delta_quantile = 0.999 # quantile of the delta_max estimate
    cfg.scheduler.delta_eval_timestep = 'prev' # prev (t-1) or same (t) for the second denoiser call
    cfg.scheduler.flow_steps = 50 # flow training: dt = 1 / flow_steps
    cfg.scheduler.flow_eps_target = 'guided' # guided or conditional velocity in the flow eps-term

    # condition perturbation during scheduler training
    cfg.perturb = CN()
    cfg.perturb.s = 0.025 # noise scale
    cfg.perturb.psi = 1.0 # rescale mix factor
    cfg.perturb.enabled = True

    # scheduler ablations
    cfg.ablation = CN()
    cfg.ablation.use_t = True
    cfg.ablation.use_delta_norm = True
    cfg.ablation.use_cfgpp_renoise = True
    cfg.ablation.use_perturbation = True
    cfg.ablation.constrain_w = False # squash w into (0, 1)

    # sampling
    cfg.sample = CN()
    cfg.sample.mode = 'cfgpp' # cfg, cfgpp or anneal
    cfg.sample.sampler = 'ddim' # ddim, euler or euler-a
    cfg.sample.c = 3 * math.pi / 4 # target angle in radians
    cfg.sample.resample_c = False # draw the target of every trajectory from its seed
    cfg.sample.w = 0.15 # constant guidance scale of cfg / cfgpp
    cfg.sample.lam = 0.7 # lambda of annealing guidance
    cfg.sample.strict = False # restrict cfgpp to w in [0, 1]
    cfg.sample.seeds = 200 # number of trajectories
    cfg.sample.seed_base = 0 # trajectory i uses seed seed_base + i
    cfg.sample.threads = 0 # worker count, 0 uses all cores (capped by GUIDANCE_LAB_THREADS)

    # evaluation
    cfg.eval = CN()
    cfg.eval.tol = math.pi / 64 # angular adherence tolerance
    cfg.eval.band_k = 3.0 # on-manifold band is mu_r +- band_k * sigma_r
    cfg.eval.n_bins = 16 # coverage bins
    cfg.eval.heatmap_size = 64 # delta heatmap grid points per axis
    cfg.eval.heatmap_extent = 1.5 # delta heatmap covers [-extent, extent]^2
    cfg.eval.whmap_size = 32 # w heatmap grid points per axis

    # sweep
    cfg.sweep = CN()
    cfg.sweep.backbone = '' # path to the backbone checkpoint
    cfg.sweep.preset = '' # ablation, noise_scale, or empty to use variants
    cfg.sweep.variants = [] # list of {"name", "mode", "w", "lam", "perturb_s", "ablation"}
    cfg.sweep.lam = 0.7 # lambda used to evaluate scheduler variants

    return cfg


def _coerce_numbers(loaded, defaults):
    # JSON writes 1 where the default is 1.0; yacs does not coerce int to float
    for k, v in loaded.items():
        if k not in defaults:
            continue
        d = defaults[k]
        if isinstance(v, CN) and isinstance(d, CN):
            _coerce_numbers(v, d)
        elif isinstance(d, float) and isinstance(v, int) \
                and not isinstance(v, bool):
            loaded[k] = float(v)


def _coerce_opts(opts, defaults):
    # same for KEY VALUE pairs, e.g. "sample.w 1"
    opts = list(opts)
    for i in range(0, len(opts) - 1, 2):
        node = defaults
        for name in opts[i].split('.'):
            node = node.get(name) if isinstance(node, CN) else None
        value = opts[i + 1]
        if isinstance(node, float) and isinstance(value, str) \
                and value.lstrip('+-').isdigit():
            opts[i + 1] = value + '.0'
    return opts


def load_config(fpath=None, opts=None):
    """Default config merged with a JSON (or YAML) file and KEY VALUE pairs.

    Args:
        fpath (str, optional): config file.
        opts (list, optional): ``[KEY, VALUE, ...]`` overrides, e.g.
            ``['scheduler.steps', '100']``.

    Returns:
        CfgNode
    """
    cfg = get_default_config()
    if fpath:
        with open(fpath, 'r') as f:
            loaded = CN.load_cfg(f.read())
        _coerce_numbers(loaded, cfg)
        try:
            cfg.merge_from_other_cfg(loaded)
        except (KeyError, ValueError, AssertionError) as e:
            raise ValueError('Invalid config "{}": {}'.format(fpath, e))
    if opts:
        try:
            cfg.merge_from_list(_coerce_opts(opts, cfg))
        except (KeyError, ValueError, AssertionError) as e:
            raise ValueError('Invalid config override: {}'.format(e))
    return cfg


def schedule_kwargs(cfg):
    return {
        'kind': cfg.schedule.kind,
        'T': cfg.schedule.T,
        'beta_start': cfg.schedule.beta_start,
        'beta_end': cfg.schedule.beta_end
    }


def ring_kwargs(cfg):
    return {
        'mu_r': cfg.ring.mu_r,
        'sigma_r': cfg.ring.sigma_r,
        'sigma_theta': cfg.ring.sigma_theta
    }


def optimizer_kwargs(node):
    return {
        'optim': node.optim,
        'lr': node.lr,
        'weight_decay': node.weight_decay
    }


def datamanager_kwargs(node):
    return {
        'num_samples': node.num_samples,
        'seed': node.seed
    }


def engine_run_kwargs(node):
    return {'max_steps': node.steps, 'print_freq': node.print_freq}


def perturb_kwargs(cfg):
    return {
        's': cfg.perturb.s,
        'psi': cfg.perturb.psi,
        'enabled': cfg.perturb.enabled
    }


def ablation_kwargs(cfg):
    return {
        'use_t': cfg.ablation.use_t,
        'use_delta_norm': cfg.ablation.use_delta_norm,
        'use_cfgpp_renoise': cfg.ablation.use_cfgpp_renoise,
        'use_perturbation': cfg.ablation.use_perturbation,
        'constrain_w': cfg.ablation.constrain_w
    }


def metric_kwargs(cfg):
    return {
        'tol': cfg.eval.tol,
        'band_k': cfg.eval.band_k,
        'n_bins': cfg.eval.n_bins
    }
