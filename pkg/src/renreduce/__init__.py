"""Certificate-preserving state-dimension reduction of recurrent equilibrium networks."""

__version__ = "0.1.0"
