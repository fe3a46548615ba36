"""Stochastic simulator of retrieval backends and query streams.

Each backend ("arm") is a stochastic profile: per-query-type hit probability,
Beta-distributed recall, lognormal delay, and an alive flag (a dead arm
returns hit=0, recall=0 while its delay still accrues). Queries are short
token strings drawn from per-type pools, so a hashing featurizer gets a
learnable but imperfect type signal.

Determinism: every random draw comes from a substream keyed by
(seed, phase, stream, step[, arm]); queries and per-(step, arm) outcomes are
therefore pure functions of (scenario, seed), identical across policies, and
counterfactual pulls of the same (step, arm) agree between runs.

Non-stationarity is a sorted schedule of events (profile swap, mixture
shift, arm kill/revive) applied atomically at the start of their step.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

QUERY_TYPE_ORDER = ("simple_1hop", "multi_hop", "multi_entity", "list_answer")

QUERY_TYPE_TOKENS = {
    "simple_1hop": (
        "who", "wrote", "born", "capital", "author", "spouse", "president",
        "director", "currency", "anthem", "mayor", "height",
    ),
    "multi_hop": (
        "chain", "founder", "grandmother", "employer", "headquarters",
        "nationality", "predecessor", "studied", "influenced", "married",
        "successor", "via",
    ),
    "multi_entity": (
        "select", "filter", "entities", "join", "intersect", "union",
        "constraint", "attribute", "properties", "relation", "schema", "match",
    ),
    "list_answer": (
        "list", "all", "enumerate", "books", "movies", "awards", "members",
        "albums", "children", "teams", "languages", "every",
    ),
}

FILLER_TOKENS = ("the", "of", "in", "what", "tell", "me", "about", "please")

DELAY_CLAMP_S = (0.05, 120.0)

EVENT_KINDS = ("swap_arm_profile", "shift_query_mixture", "kill_arm", "revive_arm")

# substream tags
_STREAM_QUERY = 1
_STREAM_OUTCOME = 2
PHASE_IDS = {"offline": 1, "online": 2}


class KeyedRng:
    """Counter-based substreams: one Philox generator re-keyed in place.

    Each (stream, step, arm) tuple maps injectively onto the 128-bit Philox
    key, so draws are a pure function of the key and independent across
    keys. Re-keying a shared generator avoids per-call construction cost.
    """

    def __init__(self, seed: int, phase_id: int):
        self._key0 = (seed & 0xFFFFFFFF) | (phase_id & 0xF) << 32
        self._bg = np.random.Philox(key=0)
        self.generator = np.random.Generator(self._bg)

    def stream(self, stream: int, step: int, arm: int = 0) -> np.random.Generator:
        state = self._bg.state
        state["state"]["key"][0] = self._key0 | (stream & 0xF) << 36
        state["state"]["key"][1] = ((step & 0xFFFFFFFFFFFFFF) << 8) | ((arm + 1) & 0xFF)
        state["state"]["counter"][:] = 0
        state["buffer_pos"] = 4  # discard buffered words from the previous key
        self._bg.state = state
        return self.generator


@dataclass
class ArmProfile:
    """Stochastic model of one retrieval backend."""

    name: str
    hit_prob: dict  # query type -> probability
    recall_mean: dict  # query type -> mean of the Beta recall distribution
    delay_mean_s: float
    recall_concentration: float = 10.0
    delay_sigma_log: float = 0.25
    alive: bool = True

    def delay_log_mu(self) -> float:
        # lognormal mean is exp(mu + sigma^2/2)
        return float(np.log(self.delay_mean_s) - 0.5 * self.delay_sigma_log**2)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "hit_prob": dict(self.hit_prob),
            "recall_mean": dict(self.recall_mean),
            "delay_mean_s": self.delay_mean_s,
            "recall_concentration": self.recall_concentration,
            "delay_sigma_log": self.delay_sigma_log,
            "alive": self.alive,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ArmProfile":
        return cls(
            name=doc["name"],
            hit_prob=dict(doc["hit_prob"]),
            recall_mean=dict(doc["recall_mean"]),
            delay_mean_s=float(doc["delay_mean_s"]),
            recall_concentration=float(doc.get("recall_concentration", 10.0)),
            delay_sigma_log=float(doc.get("delay_sigma_log", 0.25)),
            alive=bool(doc.get("alive", True)),
        )


@dataclass
class ScheduleEvent:
    step: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"step": self.step, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScheduleEvent":
        return cls(step=int(doc["step"]), kind=doc["kind"], payload=dict(doc.get("payload", {})))


@dataclass
class Outcome:
    """Realized feedback of one arm pull."""

    hit: int
    recall: float
    delay: float


@dataclass
class Scenario:
    """Arms + query mixture + schedule + default horizon/seed."""

    name: str
    arms: list
    mixture: dict
    schedule: list = field(default_factory=list)
    horizon: int = 5000
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "arms": [a.to_dict() for a in self.arms],
            "mixture": dict(self.mixture),
            "schedule": [e.to_dict() for e in self.schedule],
            "horizon": self.horizon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        return cls(
            name=doc.get("name", "custom"),
            arms=[ArmProfile.from_dict(a) for a in doc["arms"]],
            mixture={k: float(v) for k, v in doc["mixture"].items()},
            schedule=[ScheduleEvent.from_dict(e) for e in doc.get("schedule", [])],
            horizon=int(doc.get("horizon", 5000)),
            seed=int(doc.get("seed", 0)),
        )

    def make_env(self, seed: int, phase: str) -> "RetrievalEnv":
        """Fresh environment at the scenario's initial state. The schedule is
        active only in the online phase; offline pretraining is stationary."""
        return RetrievalEnv(self, seed=seed, phase=phase)


class RetrievalEnv:
    def __init__(self, scenario: Scenario, seed: int, phase: str = "online"):
        if phase not in PHASE_IDS:
            raise ValueError(f"unknown phase {phase!r}")
        self.scenario_name = scenario.name
        self.seed = int(seed)
        self.phase = phase
        self.arms = [copy.deepcopy(a) for a in scenario.arms]
        self.mixture = dict(scenario.mixture)
        self.schedule = sorted(
            (copy.deepcopy(e) for e in scenario.schedule), key=lambda e: e.step
        ) if phase == "online" else []
        self.horizon = scenario.horizon
        self._rng = KeyedRng(self.seed, PHASE_IDS[phase])
        self._set_mixture(self.mixture)

    def _set_mixture(self, mixture: dict) -> None:
        self.mixture = dict(mixture)
        self._type_order = [t for t in QUERY_TYPE_ORDER if t in self.mixture]
        w = np.array([self.mixture[t] for t in self._type_order], dtype=float)
        self._type_cdf = np.cumsum(w / w.sum())

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def arm_names(self):
        return [a.name for a in self.arms]

    def query_at(self, step: int):
        """(query_text, hidden_type) for this step; idempotent in step."""
        rng = self._rng.stream(_STREAM_QUERY, step)
        idx = min(int(np.searchsorted(self._type_cdf, rng.random(), side="right")),
                  len(self._type_order) - 1)
        qtype = self._type_order[idx]
        pool = QUERY_TYPE_TOKENS[qtype]
        n_tokens = int(rng.integers(5, 11))
        tokens = [pool[int(i)] for i in rng.integers(0, len(pool), size=n_tokens)]
        tokens += [FILLER_TOKENS[int(i)] for i in rng.integers(0, len(FILLER_TOKENS), size=2)]
        return " ".join(tokens), qtype

    def pull(self, step: int, arm: int, hidden_type: str) -> Outcome:
        if not 0 <= arm < self.n_arms:
            raise ValueError(f"arm index {arm} outside [0, {self.n_arms})")
        profile = self.arms[arm]
        rng = self._rng.stream(_STREAM_OUTCOME, step, arm)
        hit = int(rng.random() < profile.hit_prob[hidden_type])
        mean = profile.recall_mean[hidden_type]
        a = mean * profile.recall_concentration
        b = (1.0 - mean) * profile.recall_concentration
        recall = float(np.clip(rng.beta(a, b), 0.0, 1.0))
        delay = float(
            np.clip(
                np.exp(rng.normal(profile.delay_log_mu(), profile.delay_sigma_log)),
                *DELAY_CLAMP_S,
            )
        )
        if not profile.alive:
            hit, recall = 0, 0.0
        return Outcome(hit=hit, recall=recall, delay=delay)

    def apply_schedule(self, step: int) -> None:
        """Apply all events scheduled for `step`, before its query is drawn."""
        for event in self.schedule:
            if event.step != step:
                continue
            if event.kind == "swap_arm_profile":
                self.arms[int(event.payload["arm"])] = ArmProfile.from_dict(
                    event.payload["profile"]
                )
            elif event.kind == "shift_query_mixture":
                self.mixture = {k: float(v) for k, v in event.payload["mixture"].items()}
                self._type_order = [t for t in QUERY_TYPE_ORDER if t in self.mixture]
            elif event.kind == "kill_arm":
                self.arms[int(event.payload["arm"])].alive = False
            elif event.kind == "revive_arm":
                self.arms[int(event.payload["arm"])].alive = True
            else:
                raise ValueError(f"unknown schedule event kind {event.kind!r}")

    # simulator-only privilege, used by the oracle reference
    def oracle_arm(self, hidden_type: str) -> int:
        best, best_key = 0, None
        for i, profile in enumerate(self.arms):
            p = profile.hit_prob[hidden_type] if profile.alive else 0.0
            key = (-p, profile.delay_mean_s, i)
            if best_key is None or key < best_key:
                best, best_key = i, key
        return best

    def expected_hit(self, arm: int, hidden_type: str) -> float:
        profile = self.arms[arm]
        return profile.hit_prob[hidden_type] if profile.alive else 0.0


def marginal_hit(profile: ArmProfile, mixture: dict) -> float:
    """Mixture-weighted hit probability of one arm."""
    total = sum(mixture.values())
    return sum(mixture[t] * profile.hit_prob[t] for t in mixture) / total


# ---------------------------------------------------------------------------
# Built-in scenarios.
#
# Three backends with distinct per-type strengths: a fast dense retriever
# (best on simple one-hop lookups), a query-language generator (best on
# multi-entity and list queries, slowest), and a graph agent (best on
# multi-hop chains). Marginal hit rates under the default mixtures land on
# the calibration anchors checked in the test suite.
# ---------------------------------------------------------------------------

WEBQSP_MIXTURE = {
    "simple_1hop": 0.62,
    "multi_hop": 0.28,
    "multi_entity": 0.06,
    "list_answer": 0.04,
}

CWQ_MIXTURE = {
    "simple_1hop": 0.05,
    "multi_hop": 0.15,
    "multi_entity": 0.45,
    "list_answer": 0.35,
}


def _recall_from_hit(hit_prob: dict, scale: float) -> dict:
    return {t: float(np.clip(scale * p, 0.05, 0.95)) for t, p in hit_prob.items()}


def _profile(name, hits, recall_scale, delay_mean_s) -> ArmProfile:
    hit_prob = dict(zip(QUERY_TYPE_ORDER, hits))
    return ArmProfile(
        name=name,
        hit_prob=hit_prob,
        recall_mean=_recall_from_hit(hit_prob, recall_scale),
        delay_mean_s=delay_mean_s,
    )


def _dense() -> ArmProfile:
    return _profile("dense", (0.90, 0.34, 0.55, 0.55), 0.72, 1.0)


def _query_language() -> ArmProfile:
    return _profile("query_language", (0.865, 0.70, 0.79, 0.75), 0.79, 15.0)


def _kg_agent() -> ArmProfile:
    return _profile("kg_agent", (0.87, 0.97, 0.47, 0.45), 0.873, 8.0)


def _kg_agent_basic() -> ArmProfile:
    # weaker agent generation used before the upgrade event
    return _profile("kg_agent", (0.72, 0.64, 0.40, 0.38), 0.70, 8.0)


BUILTIN_SCENARIOS = (
    "stationary_webqsp",
    "stationary_cwq",
    "retriever_upgrade",
    "domain_shift",
    "arm_failure",
)


def builtin_scenario(name: str) -> Scenario:
    if name == "stationary_webqsp":
        return Scenario(name, [_dense(), _query_language(), _kg_agent()], dict(WEBQSP_MIXTURE))
    if name == "stationary_cwq":
        return Scenario(name, [_dense(), _query_language(), _kg_agent()], dict(CWQ_MIXTURE))
    if name == "retriever_upgrade":
        swap = ScheduleEvent(
            step=5000,
            kind="swap_arm_profile",
            payload={"arm": 2, "profile": _kg_agent().to_dict()},
        )
        return Scenario(
            name,
            [_dense(), _query_language(), _kg_agent_basic()],
            dict(WEBQSP_MIXTURE),
            schedule=[swap],
            horizon=10000,
        )
    if name == "domain_shift":
        shift = ScheduleEvent(
            step=5000, kind="shift_query_mixture", payload={"mixture": dict(CWQ_MIXTURE)}
        )
        return Scenario(
            name,
            [_dense(), _query_language(), _kg_agent()],
            dict(WEBQSP_MIXTURE),
            schedule=[shift],
            horizon=10000,
        )
    if name == "arm_failure":
        kill = ScheduleEvent(step=5000, kind="kill_arm", payload={"arm": 2})
        return Scenario(
            name,
            [_dense(), _query_language(), _kg_agent()],
            dict(WEBQSP_MIXTURE),
            schedule=[kill],
            horizon=10000,
        )
    raise ValueError(f"unknown scenario {name!r}; expected one of {BUILTIN_SCENARIOS}")


def validate_scenario(doc: dict) -> list:
    """All invariant violations in a scenario document (empty = valid)."""
    problems = []
    arms = doc.get("arms", [])
    if not arms:
        problems.append("scenario has no arms")
    for i, arm in enumerate(arms):
        label = arm.get("name", f"arm {i}")
        for t, p in arm.get("hit_prob", {}).items():
            if t not in QUERY_TYPE_ORDER:
                problems.append(f"{label}: unknown query type {t!r} in hit_prob")
            if not 0.0 <= float(p) <= 1.0:
                problems.append(f"{label}: hit_prob[{t}] = {p} outside [0, 1]")
        for t, r in arm.get("recall_mean", {}).items():
            if not 0.0 < float(r) < 1.0:
                problems.append(f"{label}: recall_mean[{t}] = {r} outside (0, 1)")
        if float(arm.get("recall_concentration", 10.0)) <= 0:
            problems.append(f"{label}: recall_concentration must be > 0")
        if float(arm.get("delay_mean_s", 0)) <= 0:
            problems.append(f"{label}: delay_mean_s must be > 0")
        if float(arm.get("delay_sigma_log", 0.25)) <= 0:
            problems.append(f"{label}: delay_sigma_log must be > 0")
        missing = [t for t in QUERY_TYPE_ORDER if t not in arm.get("hit_prob", {})]
        if missing:
            problems.append(f"{label}: hit_prob missing query types {missing}")
    mixture = doc.get("mixture", {})
    if mixture:
        for t in mixture:
            if t not in QUERY_TYPE_ORDER:
                problems.append(f"mixture references unknown query type {t!r}")
        total = sum(float(v) for v in mixture.values())
        if abs(total - 1.0) > 1e-9:
            problems.append(f"mixture sums to {total}, expected 1")
        if any(float(v) < 0 for v in mixture.values()):
            problems.append("mixture has negative weights")
    else:
        problems.append("scenario has no mixture")
    events = doc.get("schedule", [])
    steps = [int(e.get("step", -1)) for e in events]
    if steps != sorted(steps):
        problems.append("schedule events are not sorted by step")
    seen = set()
    for e in events:
        kind = e.get("kind")
        if kind not in EVENT_KINDS:
            problems.append(f"unknown schedule event kind {kind!r}")
            continue
        payload = e.get("payload", {})
        target = payload.get("arm", payload.get("mixture") and "mixture")
        key = (int(e.get("step", -1)), kind, str(target))
        if key in seen:
            problems.append(f"duplicate schedule event {key}")
        seen.add(key)
        if kind in ("swap_arm_profile", "kill_arm", "revive_arm"):
            if not isinstance(payload.get("arm"), int) or not 0 <= payload["arm"] < len(arms):
                problems.append(f"event at step {e.get('step')}: invalid arm index")
        if kind == "swap_arm_profile" and "profile" not in payload:
            problems.append(f"event at step {e.get('step')}: swap without a profile payload")
        if kind == "shift_query_mixture":
            new_mix = payload.get("mixture", {})
            if abs(sum(float(v) for v in new_mix.values()) - 1.0) > 1e-9:
                problems.append(f"event at step {e.get('step')}: shifted mixture does not sum to 1")
    if int(doc.get("horizon", 0)) < 1:
        problems.append("horizon must be >= 1")
    return problems
