"""Input validation helpers shared across the package.

All checks raise ValueError with a message naming the offending field (and
index where applicable), so callers can surface precise diagnostics.
"""

from __future__ import annotations

import numpy as np


def as_float_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def check_gini_weights(weights, n_objectives: int | None = None) -> np.ndarray:
    """Validate a strictly decreasing, strictly positive weight vector."""
    w = as_float_vector(weights, "weights")
    if w.size == 0:
        raise ValueError("weights must be non-empty")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w <= 0):
        idx = int(np.argmax(w <= 0))
        raise ValueError(f"weights[{idx}] = {w[idx]} is not > 0")
    if np.any(np.diff(w) >= 0):
        idx = int(np.argmax(np.diff(w) >= 0))
        raise ValueError(
            f"weights must be strictly decreasing; weights[{idx}] = {w[idx]} "
            f"<= weights[{idx + 1}] = {w[idx + 1]}"
        )
    if n_objectives is not None and w.size != n_objectives:
        raise ValueError(f"expected {n_objectives} weights, got {w.size}")
    return w


def check_loss_vector(losses, name: str = "losses") -> np.ndarray:
    l = as_float_vector(losses, name)
    if not np.all(np.isfinite(l)):
        idx = int(np.argmax(~np.isfinite(l)))
        raise ValueError(f"{name}[{idx}] = {l[idx]} is not finite")
    if np.any(l < 0):
        idx = int(np.argmax(l < 0))
        raise ValueError(f"{name}[{idx}] = {l[idx]} is negative")
    return l


def check_delays(delays, name: str = "delays") -> np.ndarray:
    d = as_float_vector(delays, name)
    if d.size < 2:
        raise ValueError(f"{name} needs at least 2 arms, got {d.size}")
    bad = ~np.isfinite(d) | (d <= 0)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise ValueError(f"{name}[{idx}] = {d[idx]} for arm {idx} is not a positive finite delay")
    return d


def check_distribution(probs, name: str = "probs", atol: float = 1e-9) -> np.ndarray:
    p = as_float_vector(probs, name)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(p <= 0):
        idx = int(np.argmax(p <= 0))
        raise ValueError(f"{name}[{idx}] = {p[idx]} is not > 0")
    total = float(p.sum())
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} sums to {total}, expected 1 +/- {atol}")
    return p


def check_unit_interval(value: float, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} = {value} is outside [0, 1]")
    return v
