"""HiGHS backend through scipy, for models beyond desk scale."""

from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import LpSolution, MilpModel, Status


def highs_lp(model: MilpModel) -> LpSolution:
    c, A, senses, rhs, lb, ub, _ = model.arrays()
    le = np.nonzero(senses != "=")[0]
    eq = np.nonzero(senses == "=")[0]
    sign = np.where(senses[le] == ">=", -1.0, 1.0)
    A_ub = sp.diags(sign) @ A[le] if len(le) else None
    b_ub = sign * rhs[le] if len(le) else None
    A_eq = A[eq] if len(eq) else None
    b_eq = rhs[eq] if len(eq) else None
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=np.column_stack([lb, ub]), method="highs",
    )
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, backend="highs")
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, backend="highs")
    if res.status != 0:
        raise RuntimeError(f"HiGHS LP failed: {res.message}")
    duals = np.zeros(model.num_constrs)
    if len(le):
        duals[le] = sign * res.ineqlin.marginals
    if len(eq):
        duals[eq] = res.eqlin.marginals
    return LpSolution(
        Status.OPTIMAL, x=res.x, duals=duals, objective=float(res.fun) + model.constant, backend="highs"
    )


def highs_milp(model: MilpModel, time_limit: Optional[float] = None, abs_gap: float = 1e-6) -> LpSolution:
    c, A, senses, rhs, lb, ub, integer = model.arrays()
    lo = np.where(senses == "<=", -np.inf, rhs)
    hi = np.where(senses == ">=", np.inf, rhs)
    options = {"mip_rel_gap": 1e-9}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    constraints = [LinearConstraint(A, lo, hi)] if model.num_constrs else []
    res = milp(c, integrality=integer.astype(int), bounds=Bounds(lb, ub), constraints=constraints, options=options)
    bound = getattr(res, "mip_dual_bound", None)
    bound = None if bound is None or not np.isfinite(bound) else float(bound) + model.constant
    if res.status == 0:
        x = np.where(integer, np.round(res.x), res.x)
        return LpSolution(
            Status.OPTIMAL, x=x, objective=float(c @ x) + model.constant, bound=bound,
            nodes=int(getattr(res, "mip_node_count", 0) or 0), backend="highs",
        )
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, backend="highs")
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, backend="highs")
    if res.status == 1:
        x = None if res.x is None else np.where(integer, np.round(res.x), res.x)
        return LpSolution(
            Status.TIMEOUT, x=x, objective=None if x is None else float(c @ x) + model.constant,
            bound=bound, backend="highs",
        )
    raise RuntimeError(f"HiGHS MILP failed: {res.message}")
