"""Ordered-weighted (generalized Gini) loss aggregation and its pieces.

The scalar training loss is a weighted sum of the loss components sorted in
non-increasing order, with strictly decreasing positive weights: the largest
loss always receives the largest weight, which both rewards Pareto
improvements and penalizes imbalance between objectives (Pigou-Dalton
transfers never increase the aggregate).

Component losses:
  * hit / recall: squared error between the selected arm's predicted score
    and the observed target.
  * efficiency: KL divergence between the predicted arm distribution and a
    per-arm efficiency distribution derived from delay estimates.

All functions are pure and re-entrant.
"""

from __future__ import annotations

import numpy as np

from .validation import (
    check_delays,
    check_distribution,
    check_gini_weights,
    check_loss_vector,
    check_unit_interval,
)

# Floor applied to probability vectors before the KL term; softmax outputs can
# underflow and KL needs strictly positive entries.
PROB_FLOOR = 1e-8


def efficiency_distribution(delays) -> np.ndarray:
    """Map per-arm delays (seconds) to a probability vector exp(1/d_i)/sum.

    Slower arms receive strictly less mass, so the vector is anti-monotone in
    delay. Raises ValueError naming the offending arm for non-positive or
    non-finite delays.
    """
    d = check_delays(delays)
    logits = 1.0 / d
    logits -= logits.max()  # stable softmax; shift cancels in the ratio
    e = np.exp(logits)
    return e / e.sum()


def _descending_order(losses: np.ndarray) -> np.ndarray:
    """Sort permutation: losses descending, ties broken by ascending index."""
    return np.lexsort((np.arange(losses.size), -losses))


def ggi_aggregate(losses, weights) -> float:
    """Weighted sum of loss components sorted in non-increasing order."""
    l = check_loss_vector(losses)
    w = check_gini_weights(weights)
    if l.size != w.size:
        raise ValueError(f"losses have {l.size} components but weights have {w.size}")
    order = _descending_order(l)
    return float(np.dot(w, l[order]))


def ggi_subgradient(losses, weights) -> np.ndarray:
    """Subgradient of ggi_aggregate w.r.t. the loss vector.

    Component j receives the weight of its rank under the same tie-broken
    descending sort, i.e. the gradient of the piecewise-linear ordered
    weighted sum away from ties.
    """
    l = check_loss_vector(losses)
    w = check_gini_weights(weights)
    if l.size != w.size:
        raise ValueError(f"losses have {l.size} components but weights have {w.size}")
    order = _descending_order(l)
    grad = np.empty_like(w)
    grad[order] = w
    return grad


def loss_hit(selected_score: float, hit: int) -> float:
    """Squared error between the pulled arm's score and the binary hit."""
    s = check_unit_interval(selected_score, "selected_score")
    if hit not in (0, 1):
        raise ValueError(f"hit must be 0 or 1, got {hit}")
    return (s - float(hit)) ** 2


def loss_recall(selected_score: float, recall: float) -> float:
    """Squared error between the pulled arm's score and the observed recall."""
    s = check_unit_interval(selected_score, "selected_score")
    r = check_unit_interval(recall, "recall")
    return (s - r) ** 2


def floor_distribution(probs, floor: float = PROB_FLOOR) -> np.ndarray:
    """Clamp entries up to `floor` and renormalize to sum 1."""
    p = np.asarray(probs, dtype=float)
    p = np.maximum(p, floor)
    return p / p.sum()


def loss_efficiency(z, sigma) -> float:
    """KL(z || sigma) in nats between two arm distributions of equal length.

    Callers are expected to floor underflowing vectors first (see
    floor_distribution); zero entries raise ValueError.
    """
    zz = check_distribution(z, "z")
    ss = check_distribution(sigma, "sigma")
    if zz.size != ss.size:
        raise ValueError(f"z has {zz.size} arms but sigma has {ss.size}")
    return float(np.sum(zz * np.log(zz / ss)))


def loss_efficiency_grad(z, sigma) -> np.ndarray:
    """Gradient of KL(z || sigma) w.r.t. z: log(z/sigma) + 1."""
    zz = np.asarray(z, dtype=float)
    ss = np.asarray(sigma, dtype=float)
    return np.log(zz / ss) + 1.0
