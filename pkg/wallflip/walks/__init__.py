from .conditioned import *
