from .she import *
