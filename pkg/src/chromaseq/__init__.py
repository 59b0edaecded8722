"""Character-level text-to-color regression with self-training."""

__version__ = "0.1.0"
