# __init__

# harness reports the version, so it is set before the subpackages are imported
__version__ = "0.1.0"

import wallflip.utils
import wallflip.dynamics
import wallflip.walks
import wallflip.observables
import wallflip.continuum
import wallflip.evaluation
