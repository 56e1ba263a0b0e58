"""Learning in quantum games with matrix multiplicative weights."""

__version__ = "0.1.0"
