from .astar import (
    GridPlan,
    PlanFollower,
    Reservations,
    astar_controller,
    ma_astar,
    plan_conflicts,
    space_time_astar,
)
from .flat import FlatPolicy, flat_policy_forward

__all__ = [
    "FlatPolicy",
    "GridPlan",
    "PlanFollower",
    "Reservations",
    "astar_controller",
    "flat_policy_forward",
    "ma_astar",
    "plan_conflicts",
    "space_time_astar",
]
