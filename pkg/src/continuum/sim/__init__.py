"""Discrete-time simulator of services on an edge/fog/cloud continuum."""

from .episode import CSV_COLUMNS, CSV_VERSION, EpisodeLog, StepRecord, run_episode
from .scenario import (
    AgentBinding,
    Application,
    Coordination,
    Scenario,
    ScenarioError,
    SloChange,
    builtin_scenario_path,
    dump_scenario,
    load_builtin,
    load_scenario,
    load_scenario_file,
    parse_scenario,
)
from .scope import AgentSpec, VariableDecl, compile_agent_specs, slo_var
from .world import Observation, WorldState, apply_slo_events, compute_metrics, initial_world, observe, observe_all, step

__all__ = [
    "AgentBinding",
    "AgentSpec",
    "Application",
    "CSV_COLUMNS",
    "CSV_VERSION",
    "Coordination",
    "EpisodeLog",
    "Observation",
    "Scenario",
    "ScenarioError",
    "SloChange",
    "StepRecord",
    "VariableDecl",
    "WorldState",
    "apply_slo_events",
    "builtin_scenario_path",
    "compile_agent_specs",
    "compute_metrics",
    "dump_scenario",
    "initial_world",
    "load_builtin",
    "load_scenario",
    "load_scenario_file",
    "observe",
    "observe_all",
    "parse_scenario",
    "run_episode",
    "slo_var",
    "step",
]
