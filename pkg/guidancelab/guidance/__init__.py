from __future__ import absolute_import

from .combine import *
from .perturb import *
from .sampling import *
from .flow import *
