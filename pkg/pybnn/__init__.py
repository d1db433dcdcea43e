# Licensed under a 3-clause BSD style license - see LICENSE.txt

# Packages may add whatever they like to this file, but
# should keep this content at the top.
# ----------------------------------------------------------------------------
from ._astropy_init import *
# ----------------------------------------------------------------------------

from .config import *
from .tensor import *
from .bitkernel import *
from .activations import *
from .layers import *
from .modules import *
from .arch import *
from .opscount import *
from .loss import *
from .data import *
from .checkpoint import *
from .train import *
from .gradcheck import *
from .wrappers import *
