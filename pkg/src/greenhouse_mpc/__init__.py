"""Lettuce greenhouse model, recurrent surrogates and receding-horizon control."""
__version__ = "0.1.0"
