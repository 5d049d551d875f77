"""Solver-neutral linear / mixed-integer model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

INF = math.inf


class VarType(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    vtype: VarType


@dataclass(frozen=True)
class Constraint:
    name: str
    indices: Tuple[int, ...]
    coefs: Tuple[float, ...]
    sense: Sense
    rhs: float


Coefs = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


def _merge(coefs: Coefs) -> Dict[int, float]:
    items = coefs.items() if isinstance(coefs, Mapping) else coefs
    out: Dict[int, float] = {}
    for j, v in items:
        out[j] = out.get(j, 0.0) + float(v)
    return out


class MilpModel:
    """Variables, linear constraints and a minimization objective.

    A model is mutable until :meth:`freeze` is called; solvers freeze it.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective: Dict[int, float] = {}
        self.constant = 0.0
        self._names: Dict[str, int] = {}
        self._cnames: Dict[str, int] = {}
        self._frozen = False
        self._arrays = None

    # building ------------------------------------------------------------
    def _check_mutable(self) -> None:
        if self._frozen:
            raise RuntimeError("model is frozen")

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, vtype: VarType = VarType.CONTINUOUS) -> int:
        self._check_mutable()
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        vtype = VarType(vtype)
        if vtype is VarType.BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ValueError(f"variable {name!r} has empty domain [{lb}, {ub}]")
        self._names[name] = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), vtype))
        return len(self.variables) - 1

    def add_constr(self, coefs: Coefs, sense: Union[Sense, str], rhs: float, name: Optional[str] = None) -> int:
        self._check_mutable()
        merged = _merge(coefs)
        for j, v in merged.items():
            if not 0 <= j < len(self.variables):
                raise ValueError(f"constraint references undeclared variable {j}")
            if not math.isfinite(v):
                raise ValueError("coefficients must be finite")
        name = name or f"c{len(self.constraints)}"
        if name in self._cnames:
            raise ValueError(f"duplicate constraint name {name!r}")
        idx = tuple(sorted(merged))
        self._cnames[name] = len(self.constraints)
        self.constraints.append(
            Constraint(name, idx, tuple(merged[j] for j in idx), Sense(sense), float(rhs))
        )
        return len(self.constraints) - 1

    def set_objective(self, coefs: Coefs, constant: float = 0.0) -> None:
        self._check_mutable()
        self.objective = {j: v for j, v in _merge(coefs).items()}
        self.constant = float(constant)

    def add_objective(self, j: int, coef: float) -> None:
        self._check_mutable()
        self.objective[j] = self.objective.get(j, 0.0) + float(coef)

    def freeze(self) -> "MilpModel":
        self._frozen = True
        return self

    # queries -------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constrs(self) -> int:
        return len(self.constraints)

    @property
    def is_mip(self) -> bool:
        return any(v.vtype is not VarType.CONTINUOUS for v in self.variables)

    def var_index(self, name: str) -> int:
        return self._names[name]

    def constr_index(self, name: str) -> int:
        return self._cnames[name]

    def relaxed(self) -> "MilpModel":
        """Copy with integrality dropped."""
        copy = MilpModel(self.name)
        for v in self.variables:
            copy.add_var(v.name, v.lb, v.ub, VarType.CONTINUOUS)
        for c in self.constraints:
            copy.add_constr(zip(c.indices, c.coefs), c.sense, c.rhs, c.name)
        copy.set_objective(self.objective, self.constant)
        return copy.freeze()

    def arrays(self):
        """(c, A as CSR, senses, rhs, lb, ub, integer mask) of the frozen model."""
        self.freeze()
        if self._arrays is None:
            n, m = self.num_vars, self.num_constrs
            c = np.zeros(n)
            for j, v in self.objective.items():
                c[j] = v
            rows, cols, vals = [], [], []
            for i, con in enumerate(self.constraints):
                rows.extend([i] * len(con.indices))
                cols.extend(con.indices)
                vals.extend(con.coefs)
            A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
            senses = np.array([con.sense.value for con in self.constraints], dtype=object)
            rhs = np.array([con.rhs for con in self.constraints], dtype=float)
            lb = np.array([v.lb for v in self.variables], dtype=float)
            ub = np.array([v.ub for v in self.variables], dtype=float)
            integer = np.array([v.vtype is not VarType.CONTINUOUS for v in self.variables], dtype=bool)
            self._arrays = (c, A, senses, rhs, lb, ub, integer)
        return self._arrays

    def evaluate(self, x: Sequence[float]) -> float:
        return self.constant + sum(v * x[j] for j, v in self.objective.items())

    def max_violation(self, x: Sequence[float]) -> float:
        """Largest bound or constraint violation of ``x``."""
        x = np.asarray(x, dtype=float)
        c, A, senses, rhs, lb, ub, _ = self.arrays()
        worst = 0.0
        if len(x):
            worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        if self.num_constrs:
            act = A @ x
            for i, s in enumerate(senses):
                if s == "<=":
                    worst = max(worst, act[i] - rhs[i])
                elif s == ">=":
                    worst = max(worst, rhs[i] - act[i])
                else:
                    worst = max(worst, abs(act[i] - rhs[i]))
        return worst

    def max_integrality_violation(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        mask = self.arrays()[6]
        if not mask.any():
            return 0.0
        return float(np.max(np.abs(x[mask] - np.round(x[mask]))))

    def __repr__(self) -> str:
        n_int = sum(v.vtype is not VarType.CONTINUOUS for v in self.variables)
        return f"MilpModel({self.name!r}, vars={self.num_vars} ({n_int} integer), constrs={self.num_constrs})"


@dataclass
class LpSolution:
    status: Status
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    objective: Optional[float] = None
    bound: Optional[float] = None
    nodes: int = 0
    backend: str = ""
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, model: MilpModel, name: str) -> float:
        return float(self.x[model.var_index(name)])


def duality_gap(model: MilpModel, sol: LpSolution) -> float:
    """|primal - dual| objective using row duals and bound reduced costs."""
    c, A, senses, rhs, lb, ub, _ = model.arrays()
    y = sol.duals
    reduced = c - A.T @ y
    dual_obj = model.constant + float(rhs @ y)
    for j, r in enumerate(reduced):
        if abs(r) <= 1e-9:
            continue
        bound = lb[j] if r > 0 else ub[j]
        if not math.isfinite(bound):
            return INF
        dual_obj += r * bound
    return abs(sol.objective - dual_obj)
