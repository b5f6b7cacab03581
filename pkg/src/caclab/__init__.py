"""Call admission control for multi-class loss cells: analytic models, admission
policies, a recurrent RBF controller, and a seeded event simulator."""
from .analytic import class_blocking, erlang_b, kaufman_roberts, multirate_exact, solve_recurrence
from .policies import ConventionalPolicy, FuzzyPolicy, FuzzySystem, SystemState, ThresholdPolicy, ThresholdSet
from .simulator import SimConfig, replicate, run
from .traffic import Scenario, TrafficClass, build_equal_rate_scenario, build_normalized_scenario

__version__ = "0.1.0"

__all__ = [
    "ConventionalPolicy",
    "FuzzyPolicy",
    "FuzzySystem",
    "Scenario",
    "SimConfig",
    "SystemState",
    "ThresholdPolicy",
    "ThresholdSet",
    "TrafficClass",
    "build_equal_rate_scenario",
    "build_normalized_scenario",
    "class_blocking",
    "erlang_b",
    "kaufman_roberts",
    "multirate_exact",
    "replicate",
    "run",
    "solve_recurrence",
]
