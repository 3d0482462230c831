"""Scheduling and simulation of offloaded Mixture-of-Experts inference.

Expert weights live in host memory and are copied to the device before each
expert runs. Reordering experts so copies hide behind compute removes the
stalls a naive order suffers from.
"""

from .config import (HardwareProfile, ModelGeometry, expert_flops, expert_param_bytes,
                     geometry_from_preset)
from .costs import CostVector, compute_costs, resident_capacity
from .errors import CapacityError, ConfigError, InvariantError, SizeError
from .gating import (ExpertWorkload, GatingModel, read_workload_csv, route_tokens,
                     synthetic_workload)
from .scheduler import (Diagnosis, Method, Schedule, check_constraints, diagnose, exact_order,
                        greedy_order, naive_order, schedule_experts)
from .simulator import (LayerPlan, Mode, SimReport, Stream, TimelineEvent, lower_bound, simulate,
                        simulate_layers, simulate_model)
from .verification import OracleResult, enumerate_feasibility, replay_check

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ConfigError", "CostVector", "Diagnosis", "ExpertWorkload", "GatingModel",
    "HardwareProfile", "InvariantError", "LayerPlan", "Method", "Mode", "ModelGeometry",
    "OracleResult", "Schedule", "SimReport", "SizeError", "Stream", "TimelineEvent",
    "check_constraints", "compute_costs", "diagnose", "enumerate_feasibility", "exact_order",
    "expert_flops", "expert_param_bytes", "geometry_from_preset", "greedy_order", "lower_bound",
    "naive_order", "read_workload_csv", "replay_check", "resident_capacity", "route_tokens",
    "schedule_experts", "simulate", "simulate_layers", "simulate_model", "synthetic_workload",
]
