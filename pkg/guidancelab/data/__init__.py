from __future__ import absolute_import

from .ring import *
from .datamanager import RingDataManager
