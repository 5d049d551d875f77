"""Best-first branch and bound over the internal simplex."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from typing import Optional

import numpy as np

from .model import LpSolution, MilpModel, Status
from .simplex import simplex

INT_TOL = 1e-6


def branch_and_bound(model: MilpModel, time_limit: Optional[float] = None, abs_gap: float = 1e-6) -> LpSolution:
    c, A, senses, rhs, lb, ub, integer = model.arrays()
    A = A.toarray()
    start = time.perf_counter()
    counter = itertools.count()

    def relax(lo, hi):
        status, x, _, obj = simplex(c, A, senses, rhs, lo, hi)
        return status, x, obj

    incumbent, best = None, math.inf
    status, x, obj = relax(lb, ub)
    if status is Status.INFEASIBLE:
        return LpSolution(Status.INFEASIBLE, backend="internal")
    if status is Status.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, backend="internal")
    heap = [(obj, next(counter), lb.copy(), ub.copy(), x)]
    nodes = 0
    while heap:
        bound = heap[0][0]
        if bound >= best - abs_gap:
            break
        if time_limit is not None and time.perf_counter() - start > time_limit:
            return LpSolution(
                Status.TIMEOUT,
                x=incumbent,
                objective=None if incumbent is None else best + model.constant,
                bound=bound + model.constant,
                nodes=nodes,
                backend="internal",
            )
        obj, _, lo, hi, x = heapq.heappop(heap)
        frac = np.abs(x - np.round(x))
        frac[~integer] = 0.0
        if frac.max(initial=0.0) <= INT_TOL:
            if obj < best:
                best, incumbent = obj, np.where(integer, np.round(x), x)
            continue
        j = int(np.argmax(np.minimum(x - np.floor(x), np.ceil(x) - x) * integer))
        nodes += 1
        for side in (0, 1):
            clo, chi = lo.copy(), hi.copy()
            if side == 0:
                chi[j] = math.floor(x[j])
            else:
                clo[j] = math.ceil(x[j])
            if clo[j] > chi[j]:
                continue
            cstatus, cx, cobj = relax(clo, chi)
            if cstatus is Status.OPTIMAL and cobj < best - abs_gap:
                heapq.heappush(heap, (cobj, next(counter), clo, chi, cx))
    if incumbent is None:
        return LpSolution(Status.INFEASIBLE, nodes=nodes, backend="internal")
    value = best + model.constant
    return LpSolution(Status.OPTIMAL, x=incumbent, objective=value, bound=value, nodes=nodes, backend="internal")
