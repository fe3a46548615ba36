"""Offline pretraining and online fine-tuning loops.

One step: draw the query, featurize, let the policy pick an arm, pull that
arm, feed the observation back, log a trace record. The offline phase
exposes full (hit, recall, delay) feedback; the online phase withholds
recall (binary hit plus self-measured delay only) and applies the scenario's
schedule of non-stationarity events. Feedback is partial in both phases: the
environment's pull() for the chosen arm is the only outcome source a policy
ever sees.

The per-step oracle (best true hit probability for the hidden type, ties to
the faster arm) is logged alongside for regret computation; it is simulator
privilege and never reaches the policy.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np

from .encoder import HashingQueryEncoder
from .env import PHASE_IDS, Outcome, RetrievalEnv, Scenario
from .policies import BanditPolicy
from .validation import check_gini_weights

_STREAM_POLICY = 3

OFFLINE_OBJECTIVES = ("hit", "recall", "efficiency")
ONLINE_OBJECTIVES = ("hit", "efficiency")
DEFAULT_OFFLINE_WEIGHTS = (0.5, 0.3, 0.2)
DEFAULT_ONLINE_WEIGHTS = (0.7, 0.3)
DEFAULT_OFFLINE_LR = 0.05
DEFAULT_ONLINE_LR = 0.05
DEFAULT_EPSILON = 0.1


def round6(x: float) -> float:
    """Round to 6 significant digits (trace serialization contract)."""
    return float(f"{float(x):.6g}")


@dataclass
class PhaseConfig:
    """Which objectives are live, their weights, and the step budget."""

    phase: str
    steps: int
    objectives: tuple
    weights: tuple
    lr: float | None = None
    epsilon: float | None = DEFAULT_EPSILON

    def __post_init__(self):
        if self.phase not in PHASE_IDS:
            raise ValueError(f"phase must be one of {sorted(PHASE_IDS)}, got {self.phase!r}")
        expected = OFFLINE_OBJECTIVES if self.phase == "offline" else ONLINE_OBJECTIVES
        if tuple(self.objectives) != expected:
            raise ValueError(f"{self.phase} phase uses objectives {expected}, got {self.objectives}")
        check_gini_weights(self.weights, n_objectives=len(self.objectives))
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")


def offline_phase(steps: int = 5000, weights=DEFAULT_OFFLINE_WEIGHTS,
                  lr: float = DEFAULT_OFFLINE_LR, epsilon: float = DEFAULT_EPSILON) -> PhaseConfig:
    return PhaseConfig("offline", steps, OFFLINE_OBJECTIVES, tuple(weights), lr, epsilon)


def online_phase(steps: int = 10000, weights=DEFAULT_ONLINE_WEIGHTS,
                 lr: float = DEFAULT_ONLINE_LR, epsilon: float = DEFAULT_EPSILON) -> PhaseConfig:
    return PhaseConfig("online", steps, ONLINE_OBJECTIVES, tuple(weights), lr, epsilon)


@dataclass
class StepRecord:
    """One trace line; floats are pre-rounded to 6 significant digits."""

    t: int
    query_id: int
    hidden_type: str
    arm: int
    was_exploration: bool
    z: list | None
    hit: int
    recall: float
    delay: float
    losses: dict | None
    ggi_loss: float | None
    sim_seconds: float
    oracle_arm: int
    oracle_hit: int
    warning: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "t": self.t,
            "query_id": self.query_id,
            "hidden_type": self.hidden_type,
            "arm": self.arm,
            "was_exploration": self.was_exploration,
            "z": self.z,
            "hit": self.hit,
            "recall": self.recall,
            "delay": self.delay,
            "losses": self.losses,
            "ggi_loss": self.ggi_loss,
            "sim_seconds": self.sim_seconds,
            "oracle_arm": self.oracle_arm,
            "oracle_hit": self.oracle_hit,
        }
        if self.warning is not None:
            doc["warning"] = self.warning
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "StepRecord":
        return cls(**{k: doc.get(k) for k in cls.__dataclass_fields__})


def policy_rng(seed: int, phase: str, kind: str) -> np.random.Generator:
    """Exploration stream: depends only on (seed, phase, policy kind), never
    on the environment, so paired runs share identical query/outcome draws."""
    tag = zlib.crc32(kind.encode("utf-8"))
    seq = np.random.SeedSequence([seed & 0xFFFFFFFF, PHASE_IDS[phase], _STREAM_POLICY, tag])
    return np.random.Generator(np.random.PCG64(seq))


def stream_hash(scenario: Scenario, seed: int, phase: str, steps: int) -> str:
    """Digest of the (step, type, text) query stream, schedule applied.

    Policy-independent by construction; compare runs pair fairly iff these
    match per seed."""
    env = scenario.make_env(seed, phase)
    h = hashlib.sha256()
    for t in range(steps):
        env.apply_schedule(t)
        text, qtype = env.query_at(t)
        h.update(f"{t}\t{qtype}\t{text}\n".encode("utf-8"))
    return h.hexdigest()


def run_phase(
    env: RetrievalEnv,
    policy: BanditPolicy,
    phase: PhaseConfig,
    feature_encoder: HashingQueryEncoder,
    rng: np.random.Generator | None = None,
    checkpoint_every: int = 0,
    on_checkpoint=None,
):
    """Drive one phase; returns (policy, trace list). The policy must have
    been reset() and is mutated in place."""
    if phase.phase != env.phase:
        raise ValueError(f"phase config is {phase.phase!r} but env was built for {env.phase!r}")
    if phase.steps > env.horizon:
        raise ValueError(
            f"phase asks for {phase.steps} steps but the scenario horizon is {env.horizon}"
        )
    if rng is None:
        rng = policy_rng(env.seed, phase.phase, policy.kind)
    policy.begin_phase(phase)
    online = phase.phase == "online"
    trace = []
    sim_seconds = 0.0
    for t in range(phase.steps):
        if online:
            env.apply_schedule(t)
        text, qtype = env.query_at(t)
        x = feature_encoder.transform_one(text)
        record = policy.select(x, rng)
        if policy.pulls_all_arms:
            pulls = [env.pull(t, a, qtype) for a in range(env.n_arms)]
            hit, recall, delay = policy.combine(pulls)
            outcome = Outcome(hit, recall, delay)
        else:
            outcome = env.pull(t, record.arm, qtype)
        # the trace logs ground-truth recall even when feedback withholds it
        policy_view = Outcome(outcome.hit, None, outcome.delay) if online else outcome
        info = policy.observe(record, policy_view)
        oracle_arm = env.oracle_arm(qtype)
        oracle_hit = env.pull(t, oracle_arm, qtype).hit
        sim_seconds = round6(sim_seconds + round6(outcome.delay))
        losses = info.get("losses")
        trace.append(
            StepRecord(
                t=t,
                query_id=t,
                hidden_type=qtype,
                arm=record.arm,
                was_exploration=record.was_exploration,
                z=[round6(v) for v in record.z] if record.z is not None else None,
                hit=outcome.hit,
                recall=round6(outcome.recall),
                delay=round6(outcome.delay),
                losses={k: round6(v) for k, v in losses.items()} if losses else None,
                ggi_loss=round6(info["ggi"]) if info.get("ggi") is not None else None,
                sim_seconds=sim_seconds,
                oracle_arm=oracle_arm,
                oracle_hit=oracle_hit,
                warning=info.get("warning"),
            )
        )
        if checkpoint_every and on_checkpoint is not None and (t + 1) % checkpoint_every == 0:
            on_checkpoint(t + 1, policy)
    return policy, trace


def run_offline(env, policy, phase, feature_encoder, **kw):
    if phase.phase != "offline":
        raise ValueError("run_offline requires an offline PhaseConfig")
    return run_phase(env, policy, phase, feature_encoder, **kw)


def run_online(env, policy, phase, feature_encoder, **kw):
    if phase.phase != "online":
        raise ValueError("run_online requires an online PhaseConfig")
    return run_phase(env, policy, phase, feature_encoder, **kw)


@dataclass
class OracleReference:
    """Per-step best-arm series and its realized metrics."""

    arms: list = field(default_factory=list)
    hits: list = field(default_factory=list)
    recalls: list = field(default_factory=list)
    delays: list = field(default_factory=list)

    @property
    def hit_rate(self) -> float:
        return float(np.mean(self.hits)) if self.hits else 0.0


def oracle_reference(scenario: Scenario, seed: int, phase: str, horizon: int) -> OracleReference:
    """Replay the stream picking the true best arm per query (simulator
    privilege: hidden types and profiles)."""
    env = scenario.make_env(seed, phase)
    ref = OracleReference()
    for t in range(horizon):
        if phase == "online":
            env.apply_schedule(t)
        _, qtype = env.query_at(t)
        arm = env.oracle_arm(qtype)
        outcome = env.pull(t, arm, qtype)
        ref.arms.append(arm)
        ref.hits.append(outcome.hit)
        ref.recalls.append(outcome.recall)
        ref.delays.append(outcome.delay)
    return ref
