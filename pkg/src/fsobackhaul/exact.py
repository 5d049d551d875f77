"""Flow-based exact model for the survivable FSO backhaul design.

Two layers: commodity flows move over FSO and fiber arcs between FSO nodes;
every FSO hop is realized either by its direct beam or by a mirror path in
the lower layer.  :func:`build_crbnd` writes the model, :func:`solve_exact`
solves it and decodes the arc flows into a :class:`Topology`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .core import (
    Commodity,
    CostWeights,
    LinkKind,
    NotKConnectableError,
    Path,
    PotentialGraph,
    Topology,
    ValidationError,
)
from .instance import Instance, build_potential_graph
from .milp import MilpModel, Sense, Status, VarType, solve_milp

log = logging.getLogger(__name__)

Key = Tuple[int, int, int]  # (k, commodity id, link or arc id)


@dataclass
class CrbndVars:
    x: Dict[Key, int] = field(default_factory=dict)
    R: Dict[Key, int] = field(default_factory=dict)
    r: Dict[Key, int] = field(default_factory=dict)
    z: Dict[Tuple[int, int, int, int], int] = field(default_factory=dict)  # (k, d, e, mirror arc)
    Z: Dict[Key, int] = field(default_factory=dict)  # (k, d, mirror link)
    w: Dict[int, int] = field(default_factory=dict)
    y: Dict[int, int] = field(default_factory=dict)
    u: Dict[int, int] = field(default_factory=dict)
    X: Dict[int, int] = field(default_factory=dict)
    commodities: Tuple[Commodity, ...] = ()
    K: int = 1


def _mirror_distances(graph: PotentialGraph, e: int) -> Tuple[List[int], np.ndarray]:
    """Shortest lower-layer distances between the allowed nodes of hop ``e``."""
    link = graph.links[e]
    allowed = [link.p, link.q] + list(graph.mirror_nodes)
    pos = {v: i for i, v in enumerate(allowed)}
    rows, cols, vals = [], [], []
    for mid in graph.links_of_kind(LinkKind.MIRROR):
        ml = graph.links[mid]
        if ml.p in pos and ml.q in pos:
            rows += [pos[ml.p], pos[ml.q]]
            cols += [pos[ml.q], pos[ml.p]]
            vals += [ml.length, ml.length]
    n = len(allowed)
    mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
    return allowed, dijkstra(mat, directed=True)


def _candidate_mirror_arcs(graph: PotentialGraph, e: int, L: float) -> List[int]:
    link = graph.links[e]
    allowed, dist = _mirror_distances(graph, e)
    pos = {v: i for i, v in enumerate(allowed)}
    ps, qs = pos[link.p], pos[link.q]
    out = []
    for mid in graph.links_of_kind(LinkKind.MIRROR):
        for a in (2 * mid, 2 * mid + 1):
            arc = graph.arcs[a]
            if arc.tail not in pos or arc.head not in pos:
                continue
            if arc.tail == link.q or arc.head == link.p:
                continue
            reach = dist[ps, pos[arc.tail]] + arc.length + dist[pos[arc.head], qs]
            if reach <= L + 1e-9:
                out.append(a)
    return out


def build_crbnd(
    graph: PotentialGraph,
    K: int,
    weights: CostWeights,
    commodities: Optional[Sequence[Commodity]] = None,
    prune: bool = True,
    tighten: bool = True,
    revisit_cap: Optional[int] = None,
    sunk_nodes: Iterable[int] = (),
) -> Tuple[MilpModel, CrbndVars]:
    """Write the two-layer model.

    ``prune`` drops lower-layer arc variables that cannot lie on any mirror
    path of the hop within the length limit (and the then-vacuous transit
    rows).  ``tighten`` adds ``R + r <= sum of x`` per flow and link, which
    stops a flow from claiming a direct beam it does not carry.
    """
    if K < 1:
        raise ValidationError("K must be at least 1")
    if not graph.nodes:
        raise ValidationError("graph has no nodes")
    comms = tuple(graph.commodities if commodities is None else commodities)
    L = graph.max_distance
    sunk = set(sunk_nodes)
    fso_links = graph.links_of_kind(LinkKind.FSO)
    fiber_links = graph.links_of_kind(LinkKind.FIBER)
    mirror_links = graph.links_of_kind(LinkKind.MIRROR)
    layer1 = sorted(
        [a for e in fso_links + fiber_links for a in (2 * e, 2 * e + 1)]
    )
    all_mirror_arcs = [a for e in mirror_links for a in (2 * e, 2 * e + 1)]
    hop_arcs = {
        e: (_candidate_mirror_arcs(graph, e, L) if prune else list(all_mirror_arcs)) for e in fso_links
    }

    m = MilpModel("crbnd")
    v = CrbndVars(commodities=comms, K=K)
    for d in comms:
        for k in range(K):
            for a in layer1:
                v.x[(k, d.id, a)] = m.add_var(f"x_{k}_{d.id}_{a}", vtype=VarType.BINARY)
    for d in comms:
        for k in range(K):
            for e in fso_links:
                v.R[(k, d.id, e)] = m.add_var(f"R_{k}_{d.id}_{e}", vtype=VarType.BINARY)
                v.r[(k, d.id, e)] = m.add_var(f"r_{k}_{d.id}_{e}", vtype=VarType.BINARY)
    for d in comms:
        for k in range(K):
            for e in fso_links:
                for a in hop_arcs[e]:
                    v.z[(k, d.id, e, a)] = m.add_var(f"z_{k}_{d.id}_{e}_{a}", vtype=VarType.BINARY)
            for e in mirror_links:
                v.Z[(k, d.id, e)] = m.add_var(f"Zm_{k}_{d.id}_{e}", vtype=VarType.BINARY)
    for e in fso_links:
        v.w[e] = m.add_var(f"w_{e}", 0, K, VarType.INTEGER)
        v.y[e] = m.add_var(f"y_{e}", 0, math.inf, VarType.INTEGER)
    for e in fso_links + mirror_links:
        v.u[e] = m.add_var(f"u_{e}", vtype=VarType.BINARY)
    for n in graph.mirror_nodes:
        v.X[n] = m.add_var(f"X_{n}", vtype=VarType.BINARY)

    obj = [(v.w[e], 2.0 * weights.c1) for e in fso_links]
    obj += [(v.X[n], 0.0 if n in sunk else weights.c2) for n in graph.mirror_nodes]
    obj += [(v.y[e], weights.c3) for e in fso_links]
    obj += [(v.u[e], -weights.c4 * graph.links[e].reliability) for e in fso_links + mirror_links]
    m.set_objective(obj)

    layer1_set = set(layer1)
    for d in comms:
        for k in range(K):
            for n in graph.fso_nodes:
                rhs = 1.0 if n == d.source else -1.0 if n == d.dest else 0.0
                row = [(v.x[(k, d.id, a)], 1.0) for a in graph.out_arcs[n] if a in layer1_set]
                row += [(v.x[(k, d.id, a)], -1.0) for a in graph.in_arcs[n] if a in layer1_set]
                m.add_constr(row, Sense.EQ, rhs, f"flow_{k}_{d.id}_{n}")

    for d in comms:
        for k in range(K):
            for e in fso_links:
                for a in (2 * e, 2 * e + 1):
                    m.add_constr(
                        [(v.x[(k, d.id, a)], 1.0), (v.R[(k, d.id, e)], -1.0), (v.r[(k, d.id, e)], -1.0)],
                        Sense.LE, 0.0, f"real_{k}_{d.id}_{a}",
                    )
                if tighten:
                    m.add_constr(
                        [(v.R[(k, d.id, e)], 1.0), (v.r[(k, d.id, e)], 1.0)]
                        + [(v.x[(k, d.id, a)], -1.0) for a in (2 * e, 2 * e + 1)],
                        Sense.LE, 0.0, f"tight_{k}_{d.id}_{e}",
                    )
    for e in fso_links:
        for d in comms:
            m.add_constr(
                [(v.R[(k, d.id, e)], 1.0) for k in range(K)] + [(v.u[e], -1.0)],
                Sense.LE, 0.0, f"beam_{d.id}_{e}",
            )
        m.add_constr(
            [(v.x[(k, d.id, a)], 1.0) for d in comms for k in range(K) for a in (2 * e, 2 * e + 1)]
            + [(v.u[e], -1.0)],
            Sense.GE, 0.0, f"flowact_{e}",
        )
        m.add_constr(
            [(v.R[(k, d.id, e)], 1.0) for d in comms for k in range(K)] + [(v.u[e], -1.0)],
            Sense.GE, 0.0, f"beamact_{e}",
        )
        if not graph.links[e].los:
            m.add_constr([(v.u[e], 1.0)], Sense.EQ, 0.0, f"nlos_{e}")
        for d in comms:
            m.add_constr(
                [(v.x[(k, d.id, a)], 1.0) for k in range(K) for a in (2 * e, 2 * e + 1)] + [(v.w[e], -1.0)],
                Sense.LE, 0.0, f"wcount_{d.id}_{e}",
            )

    # lower layer
    for d in comms:
        for k in range(K):
            for e in fso_links:
                link = graph.links[e]
                arcs = hop_arcs[e]
                touched = {link.p, link.q}
                for a in arcs:
                    touched.update((graph.arcs[a].tail, graph.arcs[a].head))
                rvar = v.r[(k, d.id, e)]
                for n in sorted(touched):
                    if graph.is_fso(n) and n not in (link.p, link.q):
                        continue
                    row = [(v.z[(k, d.id, e, a)], 1.0) for a in arcs if graph.arcs[a].tail == n]
                    row += [(v.z[(k, d.id, e, a)], -1.0) for a in arcs if graph.arcs[a].head == n]
                    if n == link.p:
                        row.append((rvar, -1.0))
                    elif n == link.q:
                        row.append((rvar, 1.0))
                    m.add_constr(row, Sense.EQ, 0.0, f"mflow_{k}_{d.id}_{e}_{n}")
                if not prune:
                    for n in graph.fso_nodes:
                        if n in (link.p, link.q):
                            continue
                        row = [
                            (v.z[(k, d.id, e, a)], 1.0)
                            for a in arcs
                            if n in (graph.arcs[a].tail, graph.arcs[a].head)
                        ]
                        if row:
                            m.add_constr(row, Sense.EQ, 0.0, f"notransit_{k}_{d.id}_{e}_{n}")
                for a in arcs:
                    m.add_constr(
                        [(v.z[(k, d.id, e, a)], 1.0), (v.Z[(k, d.id, graph.arcs[a].link)], -1.0)],
                        Sense.LE, 0.0, f"zlink_{k}_{d.id}_{e}_{a}",
                    )
                m.add_constr(
                    [(v.z[(k, d.id, e, a)], graph.arcs[a].length) for a in arcs],
                    Sense.LE, L, f"length_{k}_{d.id}_{e}",
                )
    for e in mirror_links:
        for d in comms:
            m.add_constr(
                [(v.Z[(k, d.id, e)], 1.0) for k in range(K)] + [(v.u[e], -1.0)],
                Sense.LE, 0.0, f"mdisj_{d.id}_{e}",
            )
        row = [
            (j, 1.0) for (k, dd, ee, a), j in v.z.items() if graph.arcs[a].link == e
        ]
        m.add_constr(row + [(v.u[e], -1.0)], Sense.GE, 0.0, f"mact_{e}")
    for e in fso_links:
        for d in comms:
            row = []
            for k in range(K):
                row += [(v.z[(k, d.id, e, a)], 1.0) for a in hop_arcs[e]]
                row.append((v.r[(k, d.id, e)], -1.0))
            m.add_constr(row + [(v.y[e], -1.0)], Sense.LE, 0.0, f"mirrors_{d.id}_{e}")
    for e in mirror_links:
        link = graph.links[e]
        for n in (link.p, link.q):
            if not graph.is_fso(n):
                m.add_constr([(v.u[e], 1.0), (v.X[n], -1.0)], Sense.LE, 0.0, f"lease_{e}_{n}")
    if revisit_cap is not None:
        for d in comms:
            for k in range(K):
                for n in graph.mirror_nodes:
                    row = [(j, 1.0) for (kk, dd, e, a), j in v.z.items()
                           if kk == k and dd == d.id and graph.arcs[a].head == n]
                    if len(row) > revisit_cap:
                        m.add_constr(row, Sense.LE, revisit_cap, f"visits_{k}_{d.id}_{n}")
    return m.freeze(), v


def _follow(arcs_on: Dict[int, bool], graph: PotentialGraph, start: int, stop: int) -> List[int]:
    """Walk unused ``on`` arcs from ``start`` to ``stop``, lowest arc id first."""
    used = set()
    walk: List[int] = []
    node = start
    limit = len(arcs_on) + 1
    while node != stop and limit > 0:
        limit -= 1
        nxt = [a for a in graph.out_arcs[node] if arcs_on.get(a) and a not in used]
        if not nxt:
            raise ValidationError(f"flow from {start} breaks at node {node}")
        a = min(nxt)
        used.add(a)
        walk.append(a)
        node = graph.arcs[a].head
    if node != stop:
        raise ValidationError(f"flow from {start} never reaches {stop}")
    return walk


def _shortcut(graph: PotentialGraph, walk: List[int], keep) -> List[int]:
    """Remove closed sub-walks that return to a node selected by ``keep``."""
    out: List[int] = []
    pos = {graph.arcs[walk[0]].tail: 0}
    for a in walk:
        out.append(a)
        h = graph.arcs[a].head
        if not keep(h):
            continue
        if h in pos:
            cut = pos[h]
            del out[cut:]
            pos = {n: i for n, i in pos.items() if i <= cut}
        else:
            pos[h] = len(out)
    return out


def decode_paths(graph: PotentialGraph, model: MilpModel, v: CrbndVars, x: np.ndarray) -> Dict[int, List[Path]]:
    """Turn integral arc flows into K paths per commodity."""
    on = lambda j: x[j] > 0.5
    paths: Dict[int, List[Path]] = {}
    for d in v.commodities:
        plist = []
        for k in range(v.K):
            flow = {a: on(j) for (kk, dd, a), j in v.x.items() if kk == k and dd == d.id}
            walk = _follow(flow, graph, d.source, d.dest)
            walk = _shortcut(graph, walk, lambda n: True)
            arcs: List[int] = []
            for a in walk:
                arc = graph.arcs[a]
                e = arc.link
                if graph.links[e].kind is LinkKind.FIBER or on(v.R[(k, d.id, e)]):
                    arcs.append(a)
                    continue
                link = graph.links[e]
                zon = {m: on(j) for (kk, dd, ee, m), j in v.z.items() if kk == k and dd == d.id and ee == e}
                seg = _follow(zon, graph, link.p, link.q)
                seg = _shortcut(graph, seg, lambda n: True)
                if arc.tail != link.p:
                    seg = [s ^ 1 for s in reversed(seg)]
                arcs.extend(seg)
            plist.append(graph.path_from_arcs(arcs))
        paths[d.id] = plist
    return paths


def _name_failing_commodity(graph: PotentialGraph, K: int, weights: CostWeights) -> Optional[Commodity]:
    for d in graph.commodities:
        model, _ = build_crbnd(graph, K, CostWeights(0, 0, 0, 0), commodities=[d])
        if solve_milp(model, backend="highs").status is Status.INFEASIBLE:
            return d
    return None


def solve_exact(
    instance: Union[Instance, PotentialGraph],
    K: Optional[int] = None,
    weights: Optional[CostWeights] = None,
    time_limit: Optional[float] = None,
    backend: str = "auto",
    prune: bool = True,
    tighten: bool = True,
) -> Topology:
    """Solve the exact model and decode a topology.

    The reported objective and its terms are recomputed from the decoded
    paths; the solver's own value is kept in ``model_objective``.
    """
    if isinstance(instance, Instance):
        graph = build_potential_graph(instance)
        K = instance.K if K is None else K
        weights = instance.weights if weights is None else weights
    else:
        graph = instance
        K = 1 if K is None else K
        weights = weights or CostWeights()
    start = time.perf_counter()
    model, v = build_crbnd(graph, K, weights, prune=prune, tighten=tighten)
    sol = solve_milp(model, time_limit=time_limit, backend=backend)
    elapsed = time.perf_counter() - start
    info = {
        "method": "exact",
        "backend": sol.backend,
        "num_vars": model.num_vars,
        "num_constrs": model.num_constrs,
        "nodes": sol.nodes,
        "time_s": elapsed,
    }
    if sol.status is Status.INFEASIBLE:
        bad = _name_failing_commodity(graph, K, weights)
        where = f" (commodity {bad.pair})" if bad else ""
        raise NotKConnectableError(f"no {K} link-disjoint paths exist{where}", bad)
    if sol.status is Status.TIMEOUT and sol.x is None:
        return Topology(
            K=K, weights=weights, paths={}, established_links=(), leased_nodes=(),
            devices=None, terms={}, objective=math.inf, normalized_reliability=0.0,
            status="timeout", bound=sol.bound, model_objective=None, info=info,
        )
    if sol.x is None:
        raise RuntimeError(f"exact solve ended with status {sol.status.value}")
    paths = decode_paths(graph, model, v, sol.x)
    topo = Topology.from_paths(
        graph, paths, K, weights,
        status=sol.status.value, bound=sol.bound, model_objective=sol.objective, info=info,
    )
    if sol.objective is not None and abs(topo.objective - sol.objective) > 1e-6 * (1 + abs(sol.objective)):
        log.warning("decoded objective %.9g differs from model objective %.9g", topo.objective, sol.objective)
        topo.info["objective_mismatch"] = topo.objective - sol.objective
    return topo
