"""Commodity-by-commodity column generation heuristic.

For each commodity (longest first) a phase-1 column generation finds K
disjoint paths, the link-path master is then priced out, a binary check
confirms K integral disjoint paths exist (falling back to a one-commodity
exact model otherwise) and the chosen paths become sunk deployment.  Pools
are shared through path breakdown, and a final joint assignment picks one
K-set per commodity.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .core import (
    Commodity,
    CostWeights,
    LinkKind,
    NotKConnectableError,
    Path,
    PotentialGraph,
    Topology,
    count_devices,
    mirror_segments,
    validate_path,
)
from .instance import Instance, build_potential_graph
from .milp import LpSolution, MilpModel, Sense, Status, VarType, solve_lp, solve_milp
from .pricing import solve_pricing

log = logging.getLogger(__name__)

RC_TOL = 1e-6
MAX_COLUMNS = 200

__all__ = [
    "DeploymentState", "PathPool", "breakdown_paths", "count_devices", "feasibility_check",
    "find_initial_paths", "generate_paths", "sequential_solve", "solve_joint_assignment",
    "solve_master_lp", "write_traces",
]


class PathPool:
    """Candidate paths per commodity, each stored oriented from the source."""

    def __init__(self, graph: PotentialGraph):
        self.graph = graph
        self.paths: Dict[int, List[Path]] = {c.id: [] for c in graph.commodities}
        self._keys: Dict[int, Set[Tuple[int, ...]]] = {c.id: set() for c in graph.commodities}

    def add(self, d: int, path: Path) -> bool:
        c = self.graph.commodities[d]
        path = path.oriented(self.graph, c.source)
        if path.dest != c.dest:
            raise ValueError(f"path {path.nodes} does not join commodity {c.pair}")
        if path.arcs in self._keys[d]:
            return False
        validate_path(path, self.graph, c)
        self._keys[d].add(path.arcs)
        self.paths[d].append(path)
        return True

    def __contains__(self, item: Tuple[int, Path]) -> bool:
        d, path = item
        return path.oriented(self.graph, self.graph.commodities[d].source).arcs in self._keys[d]

    def __getitem__(self, d: int) -> List[Path]:
        return self.paths[d]

    def size(self) -> int:
        return sum(len(p) for p in self.paths.values())


@dataclass
class DeploymentState:
    links: Set[int] = field(default_factory=set)  # FL
    nodes: Set[int] = field(default_factory=set)  # FM
    copies: Counter = field(default_factory=Counter)  # segment key -> installed copies

    def record(self, paths: Sequence[Path], graph: PotentialGraph) -> None:
        used: Counter = Counter()
        for p in paths:
            for seg in mirror_segments(p, graph):
                if seg.kind == "fiber":
                    continue
                used[seg.key] += 1
                self.nodes.update(seg.interior)
            self.links.update(p.link_set(graph))
        for key, n in used.items():
            self.copies[key] = max(self.copies[key], n)


# costs ---------------------------------------------------------------------
def path_device_cost(path: Path, graph: PotentialGraph, weights: CostWeights, state: Optional[DeploymentState] = None) -> float:
    """Transceiver and mirror cost of one path, with registered copies free."""
    cost = 0.0
    for seg in mirror_segments(path, graph):
        if seg.kind == "fiber":
            continue
        if state is not None and state.copies.get(seg.key, 0) > 0:
            continue
        cost += 2 * weights.c1 + weights.c3 * len(seg.interior)
    return cost


def arc_costs(graph: PotentialGraph, weights: CostWeights, state: Optional[DeploymentState] = None) -> Dict[int, float]:
    """Per-arc share of the device cost; never above the true path cost."""
    sunk_links = set()
    if state is not None:
        for (pair, interior), n in state.copies.items():
            nodes = (pair[0],) + interior + (pair[1],)
            for u, v in zip(nodes, nodes[1:]):
                kind = LinkKind.FSO if not interior else LinkKind.MIRROR
                e = graph.link_between(u, v, kind)
                if e is not None:
                    sunk_links.add(e)
    out = {}
    for arc in graph.arcs:
        link = graph.links[arc.link]
        if link.kind is LinkKind.FIBER or arc.link in sunk_links:
            out[arc.id] = 0.0
            continue
        c = 0.0
        for n in (arc.tail, arc.head):
            c += weights.c1 if graph.is_fso(n) else weights.c3 / 2
        out[arc.id] = c
    return out


def _beam_links(path: Path, graph: PotentialGraph) -> List[int]:
    return sorted(path.link_set(graph))


def _upper(path: Path, graph: PotentialGraph, K: int) -> float:
    return float(K) if not path.link_set(graph) else 1.0


# phase 1 -------------------------------------------------------------------
def _phase1_model(paths: Sequence[Path], graph: PotentialGraph, K: int, binary: bool) -> Tuple[MilpModel, List[int]]:
    m = MilpModel("phase1")
    vtype = VarType.INTEGER if binary else VarType.CONTINUOUS
    xs = [m.add_var(f"X_{i}", 0.0, _upper(p, graph, K), vtype) for i, p in enumerate(paths)]
    m.set_objective([(j, -1.0) for j in xs])
    m.add_constr([(j, 1.0) for j in xs], Sense.LE, K, "card")
    links = sorted({e for p in paths for e in p.link_set(graph)})
    for e in links:
        row = [(xs[i], 1.0) for i, p in enumerate(paths) if e in p.link_set(graph)]
        m.add_constr(row, Sense.LE, 1.0, f"link_{e}")
    return m, links


def find_initial_paths(
    graph: PotentialGraph, d: Union[int, Commodity], K: int, pool: Optional[PathPool] = None,
    method: str = "auto", trace: Optional[list] = None,
) -> PathPool:
    """Phase-1 column generation: grow ``pool[d]`` until K disjoint units fit.

    Raises :class:`NotKConnectableError` when pricing proves the LP value is
    stuck below K.
    """
    c = graph.commodities[d] if isinstance(d, int) else d
    pool = pool if pool is not None else PathPool(graph)
    for it in range(MAX_COLUMNS):
        paths = pool[c.id]
        if paths:
            model, links = _phase1_model(paths, graph, K, binary=False)
            sol = solve_lp(model)
            value = -sol.objective
            lam = sol.duals[0]
            pi = {e: -sol.duals[1 + i] for i, e in enumerate(links)}
        else:
            value, lam, pi = 0.0, 0.0, {}
        if value >= K - 1e-9:
            return pool
        res = _price(graph, pi, c, method)
        if trace is not None:
            trace.append({"commodity": c.id, "phase": 1, "iteration": it, "master_objective": value,
                          "pricing_cost": res.cost, "lambda": lam})
        # reduced cost of a new unit column in min(-sum X): -1 - lam + sum pi
        if res.path is None or res.cost - lam - 1.0 >= -RC_TOL or not pool.add(c.id, res.path):
            raise NotKConnectableError(
                f"commodity {c.pair} has at most {value:.3g} < {K} link-disjoint paths", c
            )
    raise NotKConnectableError(f"column limit reached for commodity {c.pair}", c)


def feasibility_check(pool: Union[PathPool, Sequence[Path]], K: int, graph: Optional[PotentialGraph] = None,
                      d: Optional[int] = None) -> bool:
    """True iff K fully disjoint integral paths can be taken from the pool."""
    if isinstance(pool, PathPool):
        graph = pool.graph
        paths = pool[d]
    else:
        paths = list(pool)
    if not paths:
        return False
    model, _ = _phase1_model(paths, graph, K, binary=True)
    sol = solve_milp(model)
    return sol.optimal and -sol.objective >= K - 1e-6


# master --------------------------------------------------------------------
@dataclass
class MasterModel:
    model: MilpModel
    X: List[int]
    links: List[int]
    U: Dict[int, int]
    Y: Dict[int, int]


def _master_model(paths, graph, weights, K, state, binary=False) -> MasterModel:
    m = MilpModel("master")
    vt = VarType.INTEGER if binary else VarType.CONTINUOUS
    # the relaxation leaves X_p unbounded above: U_e <= 1 and the cardinality row
    # already cap it, and an explicit bound would hide the blocking link's dual
    X = [m.add_var(f"X_{i}", 0.0, _upper(p, graph, K) if binary else math.inf, vt) for i, p in enumerate(paths)]
    links = sorted({e for p in paths for e in p.link_set(graph)})
    U = {e: m.add_var(f"U_{e}", 0.0, 1.0, vt) for e in links}
    mnodes = sorted({n for e in links for n in (graph.links[e].p, graph.links[e].q) if not graph.is_fso(n)})
    Y = {n: m.add_var(f"Y_{n}", 0.0, 1.0, vt) for n in mnodes}
    obj = [(X[i], path_device_cost(p, graph, weights, state)) for i, p in enumerate(paths)]
    obj += [(Y[n], 0.0 if n in state.nodes else weights.c2) for n in mnodes]
    obj += [(U[e], -weights.c4 * graph.links[e].reliability) for e in links]
    m.set_objective(obj)
    m.add_constr([(j, 1.0) for j in X], Sense.EQ, K, "card")
    for e in links:
        row = [(X[i], 1.0) for i, p in enumerate(paths) if e in p.link_set(graph)]
        m.add_constr(row + [(U[e], -1.0)], Sense.EQ, 0.0, f"link_{e}")
    for e in links:
        for n in (graph.links[e].p, graph.links[e].q):
            if n in Y:
                m.add_constr([(U[e], 1.0), (Y[n], -1.0)], Sense.LE, 0.0, f"lease_{e}_{n}")
    return MasterModel(m.freeze(), X, links, U, Y)


def solve_master_lp(
    pool: Union[PathPool, Sequence[Path]], graph: PotentialGraph, weights: CostWeights, K: int,
    state: Optional[DeploymentState] = None, d: Optional[int] = None,
) -> Tuple[LpSolution, float, Dict[int, float]]:
    """LP relaxation of the link-path master.

    Returns the solution, the cardinality dual and reduced link weights
    ``pi_e`` (the negated link-row duals).
    """
    paths = pool[d] if isinstance(pool, PathPool) else list(pool)
    state = state or DeploymentState()
    mm = _master_model(paths, graph, weights, K, state)
    sol = solve_lp(mm.model)
    if not sol.optimal:
        raise RuntimeError(f"master LP is {sol.status.value}; pool cannot host {K} paths")
    lam = float(sol.duals[0])
    pi = {e: -float(sol.duals[1 + i]) for i, e in enumerate(mm.links)}
    return sol, lam, pi


def _price(graph, pi, c: Commodity, method: str, costs=None, leases=None):
    """Column pricing; ``auto`` runs the label search for any weight sign and
    uses the MILP only when the visit cap truncated it."""
    if method != "auto":
        return solve_pricing(graph, pi, c.source, c.dest, method=method, arc_costs=costs, node_costs=leases)
    res = solve_pricing(graph, pi, c.source, c.dest, method="labels", arc_costs=costs, node_costs=leases)
    if res.cap_hit:
        res = solve_pricing(graph, pi, c.source, c.dest, method="milp", arc_costs=costs, node_costs=leases)
    return res


def _entry_weights(
    graph: PotentialGraph, weights: CostWeights, state: DeploymentState, paths: Sequence[Path], pi: Dict[int, float]
) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Pricing weights for links and mirror nodes the master does not hold yet.

    A new link enters with U_e = X_p, so it carries its reliability bonus; a
    new mirror node must be leased unless it already is.
    """
    pi = dict(pi)
    for link in graph.links:
        if link.establishable and link.id not in pi:
            pi[link.id] = -weights.c4 * link.reliability
    held = {n for p in paths for e in p.link_set(graph) for n in (graph.links[e].p, graph.links[e].q)}
    leases = {n: weights.c2 for n in graph.mirror_nodes if n not in held and n not in state.nodes and weights.c2}
    return pi, leases


def generate_paths(
    graph: PotentialGraph, d: Union[int, Commodity], K: int, weights: CostWeights,
    state: Optional[DeploymentState] = None, pool: Optional[PathPool] = None,
    method: str = "auto", trace: Optional[list] = None,
) -> PathPool:
    """Price out the master for commodity ``d`` until no column improves."""
    c = graph.commodities[d] if isinstance(d, int) else d
    state = state or DeploymentState()
    pool = pool if pool is not None else PathPool(graph)
    costs = arc_costs(graph, weights, state)
    for it in range(MAX_COLUMNS):
        sol, lam, pi = solve_master_lp(pool, graph, weights, K, state, c.id)
        pi, leases = _entry_weights(graph, weights, state, pool[c.id], pi)
        res = _price(graph, pi, c, method, costs, leases)
        if trace is not None:
            trace.append({"commodity": c.id, "phase": 2, "iteration": it, "master_objective": sol.objective,
                          "pricing_cost": res.cost, "lambda": lam})
        if res.path is None:
            break
        path = res.path
        reduced = (
            path_device_cost(path, graph, weights, state)
            + sum(pi.get(e, 0.0) for e in path.link_set(graph))
            + sum(leases.get(v, 0.0) for v in set(path.nodes))
            - lam
        )
        if reduced >= -RC_TOL or (c.id, path) in pool:
            break
        pool.add(c.id, path)
    return pool


def choose_paths(
    paths: Sequence[Path], graph: PotentialGraph, weights: CostWeights, K: int, state: DeploymentState
) -> List[Path]:
    """Integral master over the pool: the K paths to deploy for one commodity."""
    mm = _master_model(paths, graph, weights, K, state, binary=True)
    sol = solve_milp(mm.model)
    if not sol.optimal:
        raise RuntimeError(f"binary master is {sol.status.value}")
    chosen: List[Path] = []
    for i, j in enumerate(mm.X):
        chosen.extend([paths[i]] * int(round(sol.x[j])))
    return chosen


# breakdown -----------------------------------------------------------------
def breakdown_paths(pool: PathPool, d: int, paths: Optional[Sequence[Path]] = None) -> int:
    """Add every FSO-to-FSO subpath of commodity ``d``'s paths to its pair's pool.

    Returns the number of new columns.
    """
    graph = pool.graph
    added = 0
    for p in list(pool[d] if paths is None else paths):
        fso_pos = [i for i, v in enumerate(p.nodes) if graph.is_fso(v)]
        for a, i in enumerate(fso_pos):
            for j in fso_pos[a + 1:]:
                u, v = p.nodes[i], p.nodes[j]
                sub = graph.path_from_arcs(p.arcs[i:j])
                target = graph.commodity(u, v).id
                if (target, sub) in pool:
                    continue
                try:
                    added += pool.add(target, sub)
                except Exception:  # subpath breaks a path rule; skip it
                    continue
    return added


# joint assignment ----------------------------------------------------------
def _hop_profile(path: Path, graph: PotentialGraph) -> Tuple[Counter, Counter]:
    hops, mirrors = Counter(), Counter()
    for seg in mirror_segments(path, graph):
        if seg.kind == "fiber":
            continue
        hops[seg.pair] += 1
        mirrors[seg.pair] += len(seg.interior)
    return hops, mirrors


def solve_joint_assignment(
    pools: Union[PathPool, Mapping[int, Sequence[Path]]], graph: PotentialGraph, weights: CostWeights,
    K: int, time_limit: Optional[float] = None,
) -> Topology:
    """Pick K disjoint paths per commodity from the pools, jointly minimizing cost."""
    pmap = pools.paths if isinstance(pools, PathPool) else pools
    m = MilpModel("joint")
    X: Dict[Tuple[int, int], int] = {}
    for d in sorted(pmap):
        for i, p in enumerate(pmap[d]):
            ub = _upper(p, graph, K)
            X[(d, i)] = m.add_var(f"X_{d}_{i}", 0.0, ub, VarType.BINARY if ub == 1 else VarType.INTEGER)
    links = sorted({e for ps in pmap.values() for p in ps for e in p.link_set(graph)})
    U = {e: m.add_var(f"U_{e}", vtype=VarType.BINARY) for e in links}
    mnodes = sorted({n for e in links for n in (graph.links[e].p, graph.links[e].q) if not graph.is_fso(n)})
    Y = {n: m.add_var(f"Y_{n}", vtype=VarType.BINARY) for n in mnodes}
    profiles = {key: _hop_profile(pmap[key[0]][key[1]], graph) for key in X}
    pairs = sorted({pair for h, _ in profiles.values() for pair in h})
    W = {pr: m.add_var(f"w_{pr[0]}_{pr[1]}", 0, K, VarType.INTEGER) for pr in pairs}
    Ym = {pr: m.add_var(f"y_{pr[0]}_{pr[1]}", 0, math.inf, VarType.INTEGER) for pr in pairs}
    obj = [(W[pr], 2 * weights.c1) for pr in pairs] + [(Ym[pr], weights.c3) for pr in pairs]
    obj += [(Y[n], weights.c2) for n in mnodes]
    obj += [(U[e], -weights.c4 * graph.links[e].reliability) for e in links]
    m.set_objective(obj)

    for d in sorted(pmap):
        m.add_constr([(X[(d, i)], 1.0) for i in range(len(pmap[d]))], Sense.EQ, K, f"card_{d}")
        sets = [p.link_set(graph) for p in pmap[d]]
        for e in sorted({e for s in sets for e in s}):
            row = [(X[(d, i)], 1.0) for i, s in enumerate(sets) if e in s]
            m.add_constr(row + [(U[e], -1.0)], Sense.LE, 0.0, f"disj_{d}_{e}")
        hop_rows: Dict[Tuple[int, int], list] = {}
        mir_rows: Dict[Tuple[int, int], list] = {}
        for i in range(len(pmap[d])):
            h, mi = profiles[(d, i)]
            for pr, n in h.items():
                hop_rows.setdefault(pr, []).append((X[(d, i)], float(n)))
            for pr, n in mi.items():
                if n:
                    mir_rows.setdefault(pr, []).append((X[(d, i)], float(n)))
        for pr, row in sorted(hop_rows.items()):
            m.add_constr(row + [(W[pr], -1.0)], Sense.LE, 0.0, f"w_{d}_{pr[0]}_{pr[1]}")
        for pr, row in sorted(mir_rows.items()):
            m.add_constr(row + [(Ym[pr], -1.0)], Sense.LE, 0.0, f"y_{d}_{pr[0]}_{pr[1]}")
    for e in links:
        row = [(j, 1.0) for (d, i), j in X.items() if e in pmap[d][i].link_set(graph)]
        m.add_constr(row + [(U[e], -1.0)], Sense.GE, 0.0, f"act_{e}")
        for n in (graph.links[e].p, graph.links[e].q):
            if n in Y:
                m.add_constr([(U[e], 1.0), (Y[n], -1.0)], Sense.LE, 0.0, f"lease_{e}_{n}")
    sol = solve_milp(m, time_limit=time_limit)
    if sol.status is Status.INFEASIBLE:
        raise NotKConnectableError("pools cannot host K disjoint paths for every commodity")
    if sol.x is None:
        raise TimeoutError("joint assignment timed out without an incumbent")
    chosen: Dict[int, List[Path]] = {}
    for d in sorted(pmap):
        chosen[d] = []
        for i, p in enumerate(pmap[d]):
            chosen[d].extend([p] * int(round(sol.x[X[(d, i)]])))
    return Topology.from_paths(
        graph, chosen, K, weights, status=sol.status.value, bound=sol.bound, model_objective=sol.objective,
        info={"joint_vars": m.num_vars, "joint_constrs": m.num_constrs},
    )


# orchestration -------------------------------------------------------------
def commodity_order(graph: PotentialGraph) -> List[Commodity]:
    return sorted(graph.commodities, key=lambda c: (-c.distance, c.source, c.dest))


def _fallback_paths(graph: PotentialGraph, c: Commodity, K: int, weights: CostWeights, state: DeploymentState) -> List[Path]:
    from .exact import build_crbnd, decode_paths

    model, v = build_crbnd(graph, K, weights, commodities=[c], revisit_cap=2, sunk_nodes=state.nodes)
    sol = solve_milp(model, backend="highs")
    if sol.x is None:
        raise NotKConnectableError(f"commodity {c.pair} has no {K} link-disjoint paths", c)
    return decode_paths(graph, model, v, sol.x)[c.id]


def sequential_solve(
    instance: Union[Instance, PotentialGraph],
    K: Optional[int] = None,
    weights: Optional[CostWeights] = None,
    breakdown: bool = True,
    pricing_method: str = "auto",
    time_limit: Optional[float] = None,
) -> Topology:
    """Run the sequential heuristic and return the jointly assigned topology."""
    if isinstance(instance, Instance):
        graph = build_potential_graph(instance)
        K = instance.K if K is None else K
        weights = instance.weights if weights is None else weights
    else:
        graph = instance
        K = 1 if K is None else K
        weights = weights or CostWeights()
    if K < 1:
        raise ValueError("K must be at least 1")
    start = time.perf_counter()
    pool = PathPool(graph)
    state = DeploymentState()
    traces: List[dict] = []
    fallbacks: List[Tuple[int, int]] = []
    for c in commodity_order(graph):
        find_initial_paths(graph, c, K, pool, method=pricing_method, trace=traces)
        generate_paths(graph, c, K, weights, state, pool, method=pricing_method, trace=traces)
        if not feasibility_check(pool, K, d=c.id):
            fallbacks.append(c.pair)
            for p in _fallback_paths(graph, c, K, weights, state):
                pool.add(c.id, p)
            if not feasibility_check(pool, K, d=c.id):
                raise NotKConnectableError(f"commodity {c.pair} has no {K} link-disjoint paths", c)
        chosen = choose_paths(pool[c.id], graph, weights, K, state)
        state.record(chosen, graph)
        if breakdown:
            breakdown_paths(pool, c.id)
    topo = solve_joint_assignment(pool, graph, weights, K, time_limit)
    topo.info.update({
        "method": "sequential",
        "breakdown": breakdown,
        "pool_size": pool.size(),
        "fallbacks": fallbacks,
        "traces": traces,
        "time_s": time.perf_counter() - start,
    })
    return topo


def write_traces(traces: Sequence[Mapping], path: Union[str, FilePath]) -> None:
    """Write iteration traces as CSV (commodity, phase, iteration, master objective, pricing cost, lambda)."""
    cols = ["commodity", "phase", "iteration", "master_objective", "pricing_cost", "lambda"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in traces:
            w.writerow({k: (repr(float(row[k])) if isinstance(row[k], float) else row[k]) for k in cols})
