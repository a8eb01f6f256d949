"""Initialization-time dynamics of deep networks with decomposed batch normalization."""
__version__ = "0.1.0"
