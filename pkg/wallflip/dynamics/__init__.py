from .interface import *
from .simulate import *
