"""Robust edge-server placement and on/off scheduling from workload traces."""
__version__ = "0.1.0"

from .evaluation import (  # noqa: E402
    PolicySpec, SimulationReport, apportion, baseline_place, evaluate_placement, evaluate_schedule, min_rejection,
    required_servers,
)
from .datasets import make_city  # noqa: E402
from .estimators import BaselinePlacement, RobustPlacement, ServerScheduler  # noqa: E402
from .flow import min_cost_circulation, round_mincost  # noqa: E402
from .lp import LinearModel, LpSolution, solve_lp  # noqa: E402
from .placement import (  # noqa: E402
    FractionalPlacement, IntegerPlacement, PlacementParams, construct_routing, round_heuristic,
    solve_ro_fractional, solve_rp_fractional,
)
from .scheduling import (  # noqa: E402
    CostParams, SchedulePlan, find_k_star, plan_day, schedule_cost, solve_day_schedule, solve_slot_fractional,
)
from .topology import Neighborhood, build_neighborhoods, grid_zones, kmeans_clusters  # noqa: E402
from .traces import (  # noqa: E402
    BurstSpec, RepresentativeSet, StationSet, TraceSeries, group_and_represent, parse_trace, synth_bursts,
)

__all__ = [
    "BaselinePlacement", "BurstSpec", "CostParams", "FractionalPlacement", "IntegerPlacement", "LinearModel",
    "LpSolution", "Neighborhood", "PlacementParams", "PolicySpec", "RepresentativeSet", "RobustPlacement",
    "SchedulePlan", "ServerScheduler", "SimulationReport", "StationSet", "TraceSeries", "apportion",
    "baseline_place", "build_neighborhoods", "construct_routing", "evaluate_placement", "evaluate_schedule",
    "find_k_star", "grid_zones", "group_and_represent", "kmeans_clusters", "make_city",
    "min_cost_circulation", "min_rejection", "plan_day", "required_servers", "parse_trace", "round_heuristic", "round_mincost", "schedule_cost", "solve_day_schedule",
    "solve_lp", "solve_ro_fractional", "solve_rp_fractional", "solve_slot_fractional", "synth_bursts",
]
