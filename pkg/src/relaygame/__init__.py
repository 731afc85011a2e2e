"""Relay-selection stopping games: solvers, benchmarks and simulation.

Two battery-powered forwarders hold copies of a packet and watch relay
candidates wake up one at a time; each must decide when to stop waiting
and transmit.  This package builds the finite reward models induced by a
geographic forwarding scenario, solves the competitive game under
complete and partial observability, computes the cooperative Pareto
frontier, and simulates a full duty-cycled network running the induced
threshold policies.
"""

from .rewards import (
    INFEASIBLE,
    GeoScenario,
    RewardModel,
    RewardPmf,
    build_reward_model,
    compute_progress,
    is_infeasible,
    load_reward_model,
    required_power,
    reward_value,
    save_reward_model,
)
from .stopping import (
    GameConfig,
    SingleAgentSolution,
    solve_threshold,
    value_iteration_oracle,
)
from .cogame import (
    FAMILIES,
    CoNeppSolution,
    MixedNE,
    NonConvergenceError,
    PolicyPairCO,
    PolicyValues,
    PureNE,
    StageGame,
    Thresholds,
    VerifyReport,
    apply_T,
    assemble_solution,
    build_stage_game,
    classify_region,
    contended_stop_cost,
    evaluate_policy_pair,
    mixed_strategy_probs,
    region_equilibria,
    solve_nepp,
    stage_nash_oracle,
    thresholds_from_costs,
    verify_nepp,
)
from .pogame import (
    FORBIDDEN,
    PO_VARIANTS,
    PoNeppSolution,
    ThresholdVector,
    apply_T_bar,
    best_response_threshold,
    continue_prob,
    exhaustive_ne_oracle,
    inductive_elimination,
    is_forbidden,
    solve_po_nepp,
    stage_costs,
)
from .coop import (
    ACTION_CONTINUE_BOTH,
    ACTION_CONTINUE_STOP,
    ACTION_STOP_CONTINUE,
    CoopSolution,
    coop_value_iteration,
    pareto_sweep,
)
from .netsim import (
    NetSimConfig,
    NetSimResult,
    Network,
    PacketRecord,
    build_network,
    node_threshold,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # rewards
    "INFEASIBLE",
    "GeoScenario",
    "RewardModel",
    "RewardPmf",
    "build_reward_model",
    "compute_progress",
    "is_infeasible",
    "load_reward_model",
    "required_power",
    "reward_value",
    "save_reward_model",
    # single-agent stopping
    "GameConfig",
    "SingleAgentSolution",
    "solve_threshold",
    "value_iteration_oracle",
    # completely observable game
    "FAMILIES",
    "CoNeppSolution",
    "MixedNE",
    "NonConvergenceError",
    "PolicyPairCO",
    "PolicyValues",
    "PureNE",
    "StageGame",
    "Thresholds",
    "VerifyReport",
    "apply_T",
    "assemble_solution",
    "build_stage_game",
    "classify_region",
    "contended_stop_cost",
    "evaluate_policy_pair",
    "mixed_strategy_probs",
    "region_equilibria",
    "solve_nepp",
    "stage_nash_oracle",
    "thresholds_from_costs",
    "verify_nepp",
    # partially observable game
    "FORBIDDEN",
    "PO_VARIANTS",
    "PoNeppSolution",
    "ThresholdVector",
    "apply_T_bar",
    "best_response_threshold",
    "continue_prob",
    "exhaustive_ne_oracle",
    "inductive_elimination",
    "is_forbidden",
    "solve_po_nepp",
    "stage_costs",
    # cooperative benchmark
    "ACTION_CONTINUE_BOTH",
    "ACTION_CONTINUE_STOP",
    "ACTION_STOP_CONTINUE",
    "CoopSolution",
    "coop_value_iteration",
    "pareto_sweep",
    # network simulation
    "NetSimConfig",
    "NetSimResult",
    "Network",
    "PacketRecord",
    "build_network",
    "node_threshold",
    "simulate",
]
