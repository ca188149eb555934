from __future__ import print_function, absolute_import

from guidancelab import (
    data, optim, utils, engine, losses, models, metrics, nnkernel, diffusion,
    guidance, evaluation
)

__version__ = '0.1.0'
__description__ = 'Learned guidance-scale scheduling on a toy ring world'
