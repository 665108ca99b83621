# Dense depth prior NeRF
__version__ = "0.1.0"
