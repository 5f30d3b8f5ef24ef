"""Planner for layer-split LLM fine-tuning across mobile users and edge servers."""

from .errors import (
    DomainError,
    InfeasibleDecisionError,
    InfeasibleLinkError,
    PoleError,
    SolverError,
    StageError,
    Violation,
)
from .model import (
    Channel,
    Decision,
    EdgeServer,
    LlmConfig,
    ObjectiveBreakdown,
    Scenario,
    UserDevice,
    Weights,
    Workspace,
    as_bound,
    check_decision,
    edge_layer_cost,
    flops_per_layer,
    local_layer_cost,
    random_interior_decision,
    total_objective,
    uplink_energy,
    uplink_rate,
)
from .orchestrator import Solution, SolverConfig, solve
from .scenario_io import GenParams, generate, load_scenario, save_scenario

__version__ = "0.1.0"
