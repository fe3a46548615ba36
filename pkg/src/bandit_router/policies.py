"""Arm-selection policies behind one uniform interface.

Every policy is an sklearn-style estimator (hyperparameters in __init__,
get_params/set_params/clone for free) whose mutable state is created by
reset() and lives in trailing-underscore attributes. A sequential decision
loop drives it through select() / observe(); distinct policy instances share
nothing and can run in parallel.

Policies:
  * GgiRouterPolicy        -- deep epsilon-greedy router trained on the
                              Gini-aggregated multi-objective loss
  * SingleObjectiveRouterPolicy -- same network, hit loss only
  * LearnableWeightRouterPolicy -- same losses, softmax-learnable weights
  * StaticRouterPolicy     -- trained offline, frozen online
  * Ucb1Policy, ThompsonPolicy, LinUcbPolicy -- classic baselines on hit
  * EnsemblePolicy         -- pulls every arm, composite outcome
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import encoder as enc
from . import ggi


@dataclass
class SelectionRecord:
    """One arm choice: index, exploration flag, score snapshot, step."""

    arm: int
    was_exploration: bool
    z: np.ndarray | None
    step: int


def select_epsilon_greedy(z: np.ndarray, epsilon: float, rng: np.random.Generator):
    """Argmax with probability 1-epsilon (ties to the lowest index),
    uniformly random arm otherwise. Returns (arm, was_exploration)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon = {epsilon} outside [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(z))), True
    return int(np.argmax(z)), False


class BanditPolicy(BaseEstimator):
    """Shared state and delay tracking; subclasses implement selection."""

    kind = "base"
    pulls_all_arms = False
    uses_network = False

    def reset(self, n_arms: int, n_features: int, seed: int):
        self.n_arms_ = int(n_arms)
        self.n_features_ = int(n_features)
        self.seed_ = int(seed)
        self.step_ = 0
        self.delay_ema_ = np.zeros(self.n_arms_)
        self.delay_seen_ = np.zeros(self.n_arms_, dtype=bool)
        self._delay_sum = np.zeros(self.n_arms_)
        self._delay_n = np.zeros(self.n_arms_, dtype=int)
        self.phase_ = None
        self._reset_state()
        return self

    def _reset_state(self):
        pass

    def begin_phase(self, phase):
        """Install a PhaseConfig; seeds online delay EMAs from the offline
        per-arm empirical means when transitioning."""
        if phase.phase == "online":
            seen = self._delay_n > 0
            self.delay_ema_[seen] = self._delay_sum[seen] / self._delay_n[seen]
            self.delay_seen_ |= seen
        self.phase_ = phase
        self._on_phase(phase)

    def _on_phase(self, phase):
        pass

    def current_epsilon(self) -> float:
        if self.phase_ is not None and self.phase_.epsilon is not None:
            return self.phase_.epsilon
        return getattr(self, "epsilon", 0.0)

    def current_lr(self) -> float:
        if self.phase_ is not None and self.phase_.lr is not None:
            return self.phase_.lr
        return getattr(self, "lr", 0.0)

    # delay bookkeeping (all policies; feeds the efficiency objective)

    def update_delay_ema(self, arm: int, observed_delay: float):
        if not np.isfinite(observed_delay) or observed_delay <= 0:
            raise ValueError(f"observed_delay = {observed_delay} for arm {arm} must be > 0")
        beta = getattr(self, "delay_beta", 0.05)
        if self.delay_seen_[arm]:
            self.delay_ema_[arm] = (1.0 - beta) * self.delay_ema_[arm] + beta * observed_delay
        else:
            self.delay_ema_[arm] = observed_delay
            self.delay_seen_[arm] = True
        self._delay_sum[arm] += observed_delay
        self._delay_n[arm] += 1

    def delay_estimates(self) -> np.ndarray:
        """Per-arm delay estimates; arms never pulled fall back to the mean
        of observed arms (1s before any observation)."""
        est = self.delay_ema_.copy()
        if not self.delay_seen_.all():
            fill = est[self.delay_seen_].mean() if self.delay_seen_.any() else 1.0
            est[~self.delay_seen_] = fill
        return est

    # interface

    def select(self, x: np.ndarray, rng: np.random.Generator) -> SelectionRecord:
        raise NotImplementedError

    def observe(self, record: SelectionRecord, outcome) -> dict:
        """Consume the pulled arm's outcome; returns {'losses': ..., 'ggi': ...}
        for trace logging (empty losses for non-learning policies)."""
        raise NotImplementedError


class _DeepRouterBase(BanditPolicy):
    """Encoder-backed epsilon-greedy policies sharing the SGD machinery."""

    uses_network = True
    objective_mode = "ggi"

    def __init__(self, epsilon: float = 0.1, hidden: int = 64, delay_beta: float = 0.05):
        self.epsilon = epsilon
        self.hidden = hidden
        self.delay_beta = delay_beta

    def _reset_state(self):
        self.params_ = enc.init_params(self.seed_, self.n_features_, self.hidden, self.n_arms_)
        self.weight_logits_ = None  # learnable-weight mode only
        self._frozen = False
        self._last_x = None

    def _on_phase(self, phase):
        if self.objective_mode == "learnable":
            self.weight_logits_ = np.zeros(len(phase.objectives))

    def active_objectives(self) -> tuple:
        if self.objective_mode == "single":
            return ("hit",)
        return tuple(self.phase_.objectives)

    def predict_proba(self, X) -> np.ndarray:
        return np.stack([enc.forward(self.params_, np.asarray(x, dtype=float)) for x in X])

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def select(self, x, rng) -> SelectionRecord:
        z = enc.forward(self.params_, x)
        if self._frozen:
            arm, explored = int(np.argmax(z)), False
        else:
            arm, explored = select_epsilon_greedy(z, self.current_epsilon(), rng)
        self._last_x = x
        record = SelectionRecord(arm=arm, was_exploration=explored, z=z, step=self.step_)
        self.step_ += 1
        return record

    def _component_losses(self, record: SelectionRecord, outcome):
        """Active losses plus their gradients w.r.t. z."""
        z = record.z
        score = float(z[record.arm])
        losses, grads = [], []
        for objective in self.active_objectives():
            grad = np.zeros_like(z)
            if objective == "hit":
                losses.append(ggi.loss_hit(score, outcome.hit))
                grad[record.arm] = 2.0 * (score - outcome.hit)
            elif objective == "recall":
                losses.append(ggi.loss_recall(score, outcome.recall))
                grad[record.arm] = 2.0 * (score - outcome.recall)
            elif objective == "efficiency":
                sigma = ggi.floor_distribution(ggi.efficiency_distribution(self.delay_estimates()))
                zf = ggi.floor_distribution(z)
                losses.append(ggi.loss_efficiency(zf, sigma))
                grad = ggi.loss_efficiency_grad(zf, sigma)
            else:
                raise ValueError(f"unknown objective {objective!r}")
            grads.append(grad)
        return np.asarray(losses), grads

    def _aggregate(self, losses: np.ndarray):
        """Scalar loss and per-component weights for the gradient."""
        if self.objective_mode == "single":
            return float(losses[0]), np.ones(1)
        if self.objective_mode == "learnable":
            w = np.exp(self.weight_logits_ - self.weight_logits_.max())
            w /= w.sum()
            return float(w @ losses), w
        w = np.asarray(self.phase_.weights, dtype=float)
        return ggi.ggi_aggregate(losses, w), ggi.ggi_subgradient(losses, w)

    def observe(self, record, outcome) -> dict:
        if self._frozen:
            return {"losses": None, "ggi": None, "warning": None}
        losses, grads = self._component_losses(record, outcome)
        total, comp_weights = self._aggregate(losses)
        grad_z = sum(w * g for w, g in zip(comp_weights, grads))
        warning = None
        if np.all(np.isfinite(grad_z)):
            lr = self.current_lr()
            enc.backward_update(self.params_, self._last_x, grad_z, lr)
            if self.objective_mode == "learnable":
                # descent on the softmax weight logits alongside the network
                grad_v = comp_weights * (losses - total)
                self.weight_logits_ -= lr * grad_v
        else:
            warning = "non-finite gradient; update skipped"
        self.update_delay_ema(record.arm, outcome.delay)
        names = self.active_objectives()
        return {"losses": dict(zip(names, losses.tolist())), "ggi": total, "warning": warning}


class GgiRouterPolicy(_DeepRouterBase):
    """Deep router trained on the ordered-weighted multi-objective loss."""

    kind = "ggi_mo_mab"
    objective_mode = "ggi"


class SingleObjectiveRouterPolicy(_DeepRouterBase):
    """Same network and exploration, hit loss only."""

    kind = "so_deep_mab"
    objective_mode = "single"


class LearnableWeightRouterPolicy(_DeepRouterBase):
    """Ablation: losses combined with softmax-learnable weights (equal at
    phase start) updated by gradient descent alongside the network."""

    kind = "mo_mab"
    objective_mode = "learnable"


class StaticRouterPolicy(_DeepRouterBase):
    """Trained during the offline phase exactly like the Gini router, then
    frozen: online selection is pure argmax and nothing updates."""

    kind = "static_router"
    objective_mode = "ggi"

    def _on_phase(self, phase):
        super()._on_phase(phase)
        self._frozen = phase.phase == "online"


class Ucb1Policy(BanditPolicy):
    """Classic UCB1 on the binary hit reward, with a forced initialization
    round-robin over the arms."""

    kind = "ucb1"

    def _reset_state(self):
        self.counts_ = np.zeros(self.n_arms_, dtype=int)
        self.reward_sum_ = np.zeros(self.n_arms_)

    def select(self, x, rng) -> SelectionRecord:
        if self.counts_.min() == 0:
            arm = int(np.argmin(self.counts_))
            explored = True
        else:
            t = int(self.counts_.sum())
            index = self.reward_sum_ / self.counts_ + np.sqrt(2.0 * np.log(t) / self.counts_)
            arm = int(np.argmax(index))
            explored = False
        record = SelectionRecord(arm=arm, was_exploration=explored, z=None, step=self.step_)
        self.step_ += 1
        return record

    def observe(self, record, outcome) -> dict:
        self.counts_[record.arm] += 1
        self.reward_sum_[record.arm] += outcome.hit
        self.update_delay_ema(record.arm, outcome.delay)
        return {"losses": None, "ggi": None, "warning": None}


class ThompsonPolicy(BanditPolicy):
    """Beta-Bernoulli posterior sampling on the hit reward."""

    kind = "thompson"

    def _reset_state(self):
        self.alpha_ = np.ones(self.n_arms_)
        self.beta_ = np.ones(self.n_arms_)

    def select(self, x, rng) -> SelectionRecord:
        draws = rng.beta(self.alpha_, self.beta_)
        record = SelectionRecord(int(np.argmax(draws)), True, None, self.step_)
        self.step_ += 1
        return record

    def observe(self, record, outcome) -> dict:
        if outcome.hit:
            self.alpha_[record.arm] += 1.0
        else:
            self.beta_[record.arm] += 1.0
        self.update_delay_ema(record.arm, outcome.delay)
        return {"losses": None, "ggi": None, "warning": None}


class LinUcbPolicy(BanditPolicy):
    """Disjoint linear UCB on the context features, hit reward."""

    kind = "linucb"

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def _reset_state(self):
        self.A_ = np.stack([np.eye(self.n_features_) for _ in range(self.n_arms_)])
        self.b_ = np.zeros((self.n_arms_, self.n_features_))
        self._last_x = None

    def select(self, x, rng) -> SelectionRecord:
        scores = np.empty(self.n_arms_)
        for a in range(self.n_arms_):
            theta = np.linalg.solve(self.A_[a], self.b_[a])
            width = np.sqrt(float(x @ np.linalg.solve(self.A_[a], x)))
            scores[a] = float(theta @ x) + self.alpha * width
        self._last_x = x
        record = SelectionRecord(int(np.argmax(scores)), False, None, self.step_)
        self.step_ += 1
        return record

    def observe(self, record, outcome) -> dict:
        x = self._last_x
        self.A_[record.arm] += np.outer(x, x)
        self.b_[record.arm] += outcome.hit * x
        self.update_delay_ema(record.arm, outcome.delay)
        return {"losses": None, "ggi": None, "warning": None}


class EnsemblePolicy(BanditPolicy):
    """Pulls every arm per query; the loop composes the outcome.

    Sequential execution model by default (delay = sum over arms); the
    parallel flag switches to max-delay composition.
    """

    kind = "ensemble"
    pulls_all_arms = True

    def __init__(self, parallel: bool = False):
        self.parallel = parallel

    def select(self, x, rng) -> SelectionRecord:
        record = SelectionRecord(arm=-1, was_exploration=False, z=None, step=self.step_)
        self.step_ += 1
        return record

    def combine(self, outcomes):
        """Composite (hit, recall, delay) over per-arm outcomes."""
        hits = [o.hit for o in outcomes]
        recalls = [o.recall for o in outcomes]
        delays = [o.delay for o in outcomes]
        delay = max(delays) if self.parallel else sum(delays)
        return max(hits), max(recalls), delay

    def observe(self, record, outcome) -> dict:
        return {"losses": None, "ggi": None, "warning": None}


POLICY_KINDS = {
    cls.kind: cls
    for cls in (
        GgiRouterPolicy,
        SingleObjectiveRouterPolicy,
        LearnableWeightRouterPolicy,
        StaticRouterPolicy,
        Ucb1Policy,
        ThompsonPolicy,
        LinUcbPolicy,
        EnsemblePolicy,
    )
}


def make_policy(kind: str, **hyperparams) -> BanditPolicy:
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {sorted(POLICY_KINDS)}")
    return POLICY_KINDS[kind](**hyperparams)
