from __future__ import absolute_import

from .errors import *
from .tools import *
from .loggers import *
from .avgmeter import *
from .torchtools import *
