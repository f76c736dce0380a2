"""Data, training, evaluation and transfer protocol."""
