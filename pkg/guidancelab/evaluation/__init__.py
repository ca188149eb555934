from __future__ import absolute_import

from .io import *
from .runner import *
from .plots import *
