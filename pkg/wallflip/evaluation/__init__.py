from .stats import *
from .harness import *
