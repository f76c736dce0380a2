"""Activity recognition from smartphone sensors with dense IndRNNs."""

__version__ = "0.1.0"
