from ._search import BACKEND as SEARCH_BACKEND
from .exact import (
    DEFAULT_ORACLE_BOUND,
    InfeasibleError,
    OracleBoundError,
    SearchLimitError,
    solve_exact,
)
from .lcopg import LcopgConfig, greedy_plan, solve_lcopg
from .model import (
    Assignment,
    Diagnostics,
    OpgInstance,
    OverlapPlan,
    SolveOutcome,
    SolverError,
    SolveStatus,
    assemble_plan,
    build_instance,
    check_constraints,
    objective,
    outcome_from_json,
    outcome_to_json,
)

__all__ = [
    "Assignment",
    "DEFAULT_ORACLE_BOUND",
    "Diagnostics",
    "InfeasibleError",
    "LcopgConfig",
    "OpgInstance",
    "OracleBoundError",
    "OverlapPlan",
    "SEARCH_BACKEND",
    "SearchLimitError",
    "SolveOutcome",
    "SolveStatus",
    "SolverError",
    "assemble_plan",
    "build_instance",
    "check_constraints",
    "greedy_plan",
    "objective",
    "outcome_from_json",
    "outcome_to_json",
    "solve_exact",
    "solve_lcopg",
]
