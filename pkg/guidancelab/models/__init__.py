from __future__ import absolute_import

from .backbone import *
from .scheduler_net import *

__model_factory = {
    'denoiser': denoiser,
    'velocity': velocity_net,
    'scheduler': annealing_scheduler,
}


def show_avai_models():
    """Displays available models.

    Examples::
        >>> from guidancelab import models
        >>> models.show_avai_models()
    """
    print(list(__model_factory.keys()))


def build_model(name, **kwargs):
    """A function wrapper for building a model.

    Args:
        name (str): "denoiser", "velocity" or "scheduler".
        kwargs: forwarded to the model constructor (``schedule`` for the
            denoiser, ``num_steps`` and ``delta_max`` for the scheduler, ...).

    Returns:
        nn.Module

    Examples::
        >>> from guidancelab import models
        >>> dnet = models.build_model('denoiser', schedule=sched, seed=1)
    """
    avai_models = list(__model_factory.keys())
    if name not in avai_models:
        raise KeyError(
            'Unknown model: {}. Must be one of {}'.format(name, avai_models)
        )
    return __model_factory[name](**kwargs)
