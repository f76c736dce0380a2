"""Softmax and the negative log-likelihood objective."""

import numpy as np

PROB_FLOOR = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    ``probs`` are softmax outputs ``(batch, K)``; ``targets`` are class
    indices. Probabilities are floored at 1e-12 inside the log.
    """
    probs = np.asarray(probs)
    targets = np.asarray(targets, dtype=np.int64)
    n = probs.shape[0]
    picked = probs[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1
    return loss, grad / n
