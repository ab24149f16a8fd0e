"""l2 projected-gradient-descent attacks and robust-accuracy grids."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .linalg import format_entry
from .training import batch_margin_cross_entropy

_ZERO_GRAD_FLOOR = 1e-300


@dataclass
class AttackConfig:
    """Perturbation budget (l2 radius), iteration count, and ascent step.

    ``step_size`` defaults to 2.5 * epsilon / n_iter so the ball boundary is
    reachable within the iteration budget.
    """

    epsilon: float
    n_iter: int = 100
    step_size: float = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidInputError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.n_iter < 1:
            raise InvalidInputError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.step_size is None:
            self.step_size = 2.5 * self.epsilon / self.n_iter
        elif self.step_size <= 0:
            raise InvalidInputError(f"step_size must be positive, got {self.step_size}")


def _input_gradients(net, xs, labels, margin_offset):
    logits, cache = net.forward_with_cache(xs)
    _, gout = batch_margin_cross_entropy(logits, labels, margin_offset)
    gin, _ = net.backward(cache, gout)
    return np.atleast_2d(gin)


def pgd_l2_batch(net, xs, labels, cfg, margin_offset=0.0, stats=None):
    """Attack a stack of inputs at once.

    Starting from the clean inputs, each iteration ascends the loss along the
    per-sample unit-normalised input gradient and projects the perturbation
    back onto the l2 ball of radius epsilon.  Rows with a vanishing gradient
    skip the ascent for that iteration (counted in ``stats``).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if cfg.epsilon == 0.0:
        return xs.copy()
    delta = np.zeros_like(xs)
    zero_grad = 0
    for _ in range(cfg.n_iter):
        grad = _input_gradients(net, xs + delta, labels, margin_offset)
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        live = norms > _ZERO_GRAD_FLOOR
        zero_grad += int(np.sum(~live))
        scale = np.where(live, cfg.step_size / np.where(live, norms, 1.0), 0.0)
        delta = delta + scale * grad
        dnorm = np.linalg.norm(delta, axis=1, keepdims=True)
        over = dnorm > cfg.epsilon
        delta = delta * np.where(over, cfg.epsilon / np.where(over, dnorm, 1.0), 1.0)
    if stats is not None:
        stats["zero_grad_iterations"] = stats.get("zero_grad_iterations", 0) + zero_grad
    return xs + delta


def pgd_l2(net, x, label, cfg, margin_offset=0.0, stats=None):
    """Attack a single input; the perturbation satisfies ||delta|| <= epsilon."""
    x = np.asarray(x, dtype=float)
    out = pgd_l2_batch(net, x[None, :], np.array([label]), cfg,
                       margin_offset=margin_offset, stats=stats)
    return out[0]


def robust_accuracy(net, inputs, labels, epsilons, n_iter=100, step_size=None,
                    margin_offset=0.0):
    """Fraction of samples still classified correctly after a PGD attack at
    each epsilon.  epsilon = 0 reports clean accuracy exactly (no attack).

    Returns a list of (epsilon, accuracy, n_samples) rows.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    labels = np.asarray(labels, dtype=int)
    n = inputs.shape[0]
    rows = []
    for eps in epsilons:
        if eps == 0.0:
            preds = np.argmax(net.forward(inputs), axis=1)
        else:
            cfg = AttackConfig(epsilon=float(eps), n_iter=n_iter, step_size=step_size)
            attacked = pgd_l2_batch(net, inputs, labels, cfg,
                                    margin_offset=margin_offset)
            preds = np.argmax(net.forward(attacked), axis=1)
        rows.append((float(eps), float(np.mean(preds == labels)), n))
    return rows


def robust_accuracy_to_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("epsilon,accuracy,n_samples\n")
        for eps, acc, n in rows:
            fh.write(f"{format_entry(eps)},{format_entry(acc)},{n}\n")
