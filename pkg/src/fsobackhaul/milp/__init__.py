"""Linear and mixed-integer models plus the engines that solve them.

``backend="internal"`` uses the dense simplex and the best-first branch and
bound in this package; ``backend="highs"`` hands the model to HiGHS through
scipy.  ``"auto"`` keeps small models on the internal engines.
"""

from __future__ import annotations

from typing import Optional

from .bnb import branch_and_bound
from .highs import highs_lp, highs_milp
from .lpformat import export_model_text, parse_model_text, read_solution_vector, write_solution_vector
from .model import (
    INF,
    Constraint,
    LpSolution,
    MilpModel,
    Sense,
    Status,
    Variable,
    VarType,
    duality_gap,
)
from .simplex import simplex

# above these sizes "auto" leaves the dense engines for HiGHS
INTERNAL_LP_CELLS = 40_000
INTERNAL_MIP_INTEGERS = 24
INTERNAL_MIP_CELLS = 4_000


def _cells(model: MilpModel) -> int:
    return model.num_vars * max(1, model.num_constrs)


def solve_lp(model: MilpModel, backend: str = "auto") -> LpSolution:
    """Solve the LP relaxation of ``model``, returning primal values and row duals."""
    model.freeze()
    if backend == "auto":
        backend = "internal" if _cells(model) <= INTERNAL_LP_CELLS else "highs"
    if backend == "highs" and model.num_vars:
        return highs_lp(model)
    if backend not in ("internal", "highs"):
        raise ValueError(f"unknown backend {backend!r}")
    c, A, senses, rhs, lb, ub, _ = model.arrays()
    status, x, duals, obj = simplex(c, A.toarray(), senses, rhs, lb, ub)
    if status is not Status.OPTIMAL:
        return LpSolution(status, backend="internal")
    return LpSolution(status, x=x, duals=duals, objective=obj + model.constant, backend="internal")


def solve_milp(
    model: MilpModel, time_limit: Optional[float] = None, abs_gap: float = 1e-6, backend: str = "auto"
) -> LpSolution:
    """Solve ``model`` to proven optimality (within ``abs_gap``) or until the time limit."""
    model.freeze()
    if backend == "auto":
        n_int = sum(1 for v in model.variables if v.vtype is not VarType.CONTINUOUS)
        small = n_int <= INTERNAL_MIP_INTEGERS and _cells(model) <= INTERNAL_MIP_CELLS
        backend = "internal" if small else "highs"
    if backend == "highs" and model.num_vars:
        return highs_milp(model, time_limit, abs_gap)
    if backend not in ("internal", "highs"):
        raise ValueError(f"unknown backend {backend!r}")
    return branch_and_bound(model, time_limit, abs_gap)


__all__ = [
    "INF", "Constraint", "LpSolution", "MilpModel", "Sense", "Status", "Variable", "VarType",
    "branch_and_bound", "duality_gap", "export_model_text", "parse_model_text",
    "read_solution_vector", "simplex", "solve_lp", "solve_milp", "write_solution_vector",
]
