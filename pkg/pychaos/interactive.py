"""Interactive pychaos module

Use this module to define variables and functions to be globally available when
using

    'from pychaos.interactive import *'

Names starting with an underscore ('_') will not be exported. In addition to
the objects defined here, all objects in pychaos with the '@interactive'
decorator will also be available. In order to use this decorator in a pychaos
module, import it from pychaos.utils with

    'from pychaos.utils import interactive'
"""

import numpy as np
import matplotlib.pyplot as plt
import pychaos as _pychaos


plt.ion()

pychaos_version = _pychaos.__version__

# noise purposes of a NoisePlan
INCREMENTS = _pychaos.dynamics.NoisePlan.INCREMENTS
INITIAL = _pychaos.dynamics.NoisePlan.INITIAL

__all__ = [name for name in dir() if not name.startswith('_')]

for f in _pychaos.utils.interactive_list:
    name = f['name']
    module = getattr(_pychaos, f['module'].split('.')[1])
    globals()[name] = getattr(module, name)
    __all__.append(name)
