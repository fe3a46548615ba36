"""Multi-objective contextual bandit routing over simulated retrieval backends."""

from .encoder import HashingQueryEncoder, MLPParams, backward_update, forward, init_params
from .env import (
    ArmProfile,
    Outcome,
    RetrievalEnv,
    Scenario,
    ScheduleEvent,
    builtin_scenario,
    validate_scenario,
)
from .ggi import (
    efficiency_distribution,
    ggi_aggregate,
    ggi_subgradient,
    loss_efficiency,
    loss_hit,
    loss_recall,
)
from .loop import (
    PhaseConfig,
    StepRecord,
    offline_phase,
    online_phase,
    oracle_reference,
    run_offline,
    run_online,
)
from .metrics import MetricWindow, aggregate_seeds, compute_window, emit_table
from .policies import (
    BanditPolicy,
    EnsemblePolicy,
    GgiRouterPolicy,
    LearnableWeightRouterPolicy,
    LinUcbPolicy,
    SelectionRecord,
    SingleObjectiveRouterPolicy,
    StaticRouterPolicy,
    ThompsonPolicy,
    Ucb1Policy,
    make_policy,
)

__version__ = "0.1.0"

__all__ = [
    "ArmProfile",
    "BanditPolicy",
    "EnsemblePolicy",
    "GgiRouterPolicy",
    "HashingQueryEncoder",
    "LearnableWeightRouterPolicy",
    "LinUcbPolicy",
    "MLPParams",
    "MetricWindow",
    "Outcome",
    "PhaseConfig",
    "RetrievalEnv",
    "Scenario",
    "ScheduleEvent",
    "SelectionRecord",
    "SingleObjectiveRouterPolicy",
    "StaticRouterPolicy",
    "StepRecord",
    "ThompsonPolicy",
    "Ucb1Policy",
    "aggregate_seeds",
    "backward_update",
    "builtin_scenario",
    "compute_window",
    "efficiency_distribution",
    "emit_table",
    "forward",
    "ggi_aggregate",
    "ggi_subgradient",
    "init_params",
    "loss_efficiency",
    "loss_hit",
    "loss_recall",
    "make_policy",
    "offline_phase",
    "online_phase",
    "oracle_reference",
    "run_offline",
    "run_online",
    "validate_scenario",
]
