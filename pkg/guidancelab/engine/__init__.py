from __future__ import print_function, absolute_import

from .engine import Engine
from .backbone import *
from .scheduler import *
