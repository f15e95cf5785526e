"""Offline planner: average-channel surrogates, the three convex
subproblems (association LP, trajectory restriction, power restriction),
an in-repo barrier solver, and the alternating outer loop."""

from .planner import PlannerConfig, SolveOutcome, optimize_plan
from .solver import Infeasible, SolverError

__all__ = ["PlannerConfig", "SolveOutcome", "optimize_plan",
           "Infeasible", "SolverError"]
