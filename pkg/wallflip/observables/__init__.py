from .scaling import *
from .norms import *
