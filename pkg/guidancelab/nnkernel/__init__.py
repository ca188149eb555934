from __future__ import absolute_import

from .mlp import *
from .embedding import sinusoidal_embed
