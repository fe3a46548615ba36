"""Query featurization and the small feedforward scoring network.

The featurizer is a seeded signed feature hasher over lowercased whitespace
tokens (a lightweight stand-in for a sentence encoder, swappable behind the
same interface). The network is a single-hidden-layer ReLU MLP with a softmax
head, so its forward pass always yields a valid arm distribution. Training is
plain per-example SGD; the gradient w.r.t. the output distribution is
supplied by the caller and backpropagated through softmax, the linear layers
and the ReLU.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin


class HashingQueryEncoder(BaseEstimator, TransformerMixin):
    """Signed feature hashing of whitespace tokens into a fixed dimension.

    Deterministic for a given (n_features, seed): every token is hashed with
    a keyed 64-bit blake2b digest, one bit of which selects the sign. The
    result is L2-normalized unless it is all-zero, so feature vectors depend
    only on the multiset of tokens.
    """

    def __init__(self, n_features: int = 64, seed: int = 0):
        self.n_features = n_features
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.n_features < 8:
            raise ValueError(f"n_features must be >= 8, got {self.n_features}")
        return self

    def _token_hash(self, token: str) -> int:
        key = int(self.seed).to_bytes(8, "little", signed=True)
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
        return int.from_bytes(digest, "little")

    def transform_one(self, text: str) -> np.ndarray:
        self.fit()
        x = np.zeros(self.n_features, dtype=float)
        for token in text.lower().split():
            h = self._token_hash(token)
            sign = 1.0 if (h >> 63) & 1 else -1.0
            x[(h & ((1 << 63) - 1)) % self.n_features] += sign
        norm = np.linalg.norm(x)
        if norm > 0:
            x /= norm
        return x

    def transform(self, X) -> np.ndarray:
        return np.stack([self.transform_one(t) for t in X], axis=0)


@dataclass
class MLPParams:
    """Weights of the F -> H -> K network (ReLU hidden, softmax head)."""

    w1: np.ndarray  # (H, F)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (K, H)
    b2: np.ndarray  # (K,)
    seed: int = 0

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_arms(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "MLPParams":
        return MLPParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.seed)


def init_params(seed: int, n_features: int, hidden: int, n_arms: int) -> MLPParams:
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    if min(n_features, hidden, n_arms) < 1:
        raise ValueError("n_features, hidden and n_arms must all be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0xE0C0]))
    lim1 = np.sqrt(6.0 / (n_features + hidden))
    lim2 = np.sqrt(6.0 / (hidden + n_arms))
    return MLPParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden, n_features)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=(n_arms, hidden)),
        b2=np.zeros(n_arms),
        seed=int(seed),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def forward(params: MLPParams, x: np.ndarray) -> np.ndarray:
    """Arm distribution softmax(W2 relu(W1 x + b1) + b2)."""
    z, _ = forward_cached(params, x)
    return z


def forward_cached(params: MLPParams, x: np.ndarray):
    """Forward pass returning (z, hidden activations) for reuse in backward."""
    for name, a in (("w1", params.w1), ("b1", params.b1), ("w2", params.w2), ("b2", params.b2)):
        if not np.all(np.isfinite(a)):
            raise ValueError(f"non-finite network parameter in {name}")
    h = np.maximum(params.w1 @ x + params.b1, 0.0)
    return _softmax(params.w2 @ h + params.b2), h


def backward_update(params: MLPParams, x: np.ndarray, grad_z: np.ndarray, lr: float) -> MLPParams:
    """One SGD step given dLoss/dz; mutates and returns `params`.

    Non-finite gradients skip the step (callers log the event).
    """
    g = np.asarray(grad_z, dtype=float)
    if not np.all(np.isfinite(g)):
        return params
    z, h = forward_cached(params, x)
    # softmax jacobian: dL/do = z * (g - g.z)
    grad_o = z * (g - float(g @ z))
    grad_h = params.w2.T @ grad_o
    grad_h[h <= 0.0] = 0.0
    params.w2 -= lr * np.outer(grad_o, h)
    params.b2 -= lr * grad_o
    params.w1 -= lr * np.outer(grad_h, x)
    params.b1 -= lr * grad_h
    return params


def save_params(params: MLPParams, path: str) -> None:
    """JSON snapshot with an {F, H, K, seed} header plus layer tensors."""
    doc = {
        "n_features": params.n_features,
        "hidden": params.hidden,
        "n_arms": params.n_arms,
        "seed": params.seed,
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "b2": params.b2.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path: str) -> MLPParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    params = MLPParams(
        w1=np.asarray(doc["w1"], dtype=float),
        b1=np.asarray(doc["b1"], dtype=float),
        w2=np.asarray(doc["w2"], dtype=float),
        b2=np.asarray(doc["b2"], dtype=float),
        seed=int(doc["seed"]),
    )
    if params.w1.shape != (doc["hidden"], doc["n_features"]) or params.w2.shape != (
        doc["n_arms"],
        doc["hidden"],
    ):
        raise ValueError(f"model snapshot {path} header does not match tensor shapes")
    return params
