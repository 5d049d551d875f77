"""Shortest path under a per-mirror-segment length limit.

Two solvers share one cost definition: every distinct link used pays its
dual weight once, and every arc traversal pays its (optional) arc cost.
The port-based MILP handles any sign of weights; label setting is the fast
path for nonnegative weights.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .core import LinkKind, Path, PotentialGraph, ValidationError, validate_path
from .milp import MilpModel, Sense, Status, VarType, solve_milp

NEG_TOL = 1e-9
VISIT_CAP = 2
NOGOOD_ROUNDS = 30
TRAIL_BUDGET = 20_000


@dataclass
class PricingResult:
    path: Optional[Path]
    cost: float
    method: str
    cap_hit: bool = False
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.path is not None


def usable_arcs(graph: PotentialGraph) -> List[int]:
    """Arcs that can carry a signal: fibers plus LOS FSO and mirror links."""
    return [a.id for a in graph.arcs if graph.links[a.link].kind is LinkKind.FIBER or graph.links[a.link].los]


def path_cost(
    path: Path, duals: Mapping[int, float], arc_costs: Optional[Mapping[int, float]] = None,
    node_costs: Optional[Mapping[int, float]] = None,
) -> float:
    """Link weights once per distinct link, arc costs per arc, node costs once per node."""
    cost = sum(duals.get(e, 0.0) for e in set(path.links))
    if arc_costs:
        cost += sum(arc_costs.get(a, 0.0) for a in path.arcs)
    if node_costs:
        cost += sum(node_costs.get(v, 0.0) for v in set(path.nodes))
    return cost


def _resource_length(graph: PotentialGraph, a: int) -> float:
    arc = graph.arcs[a]
    return 0.0 if graph.links[arc.link].kind is LinkKind.FIBER else arc.length


class PortMap:
    """Per-node outgoing / incoming ports, one per usable incident arc."""

    def __init__(self, graph: PotentialGraph, arcs: Optional[Sequence[int]] = None):
        arcs = usable_arcs(graph) if arcs is None else sorted(arcs)
        self.out_ports: List[List[int]] = [[] for _ in graph.nodes]
        self.in_ports: List[List[int]] = [[] for _ in graph.nodes]
        self.gamma: Dict[Tuple[int, int], int] = {}
        for a in arcs:
            arc = graph.arcs[a]
            self.gamma[(a, arc.tail)] = len(self.out_ports[arc.tail])
            self.out_ports[arc.tail].append(a)
            self.gamma[(a, arc.head)] = len(self.in_ports[arc.head])
            self.in_ports[arc.head].append(a)


@dataclass
class PricingModel:
    model: MilpModel
    ports: PortMap
    x: Dict[int, int]
    u: Dict[int, int]
    z: Dict[Tuple[int, int, int], int]


def _effective_length(graph: PotentialGraph, L: float) -> float:
    if math.isfinite(L):
        return L
    return sum(l.length for l in graph.links if l.kind is not LinkKind.FIBER) + 1.0


def build_pricing_milp(
    graph: PotentialGraph,
    duals: Mapping[int, float],
    s: int,
    t: int,
    L: Optional[float] = None,
    arc_costs: Optional[Mapping[int, float]] = None,
    node_costs: Optional[Mapping[int, float]] = None,
) -> PricingModel:
    """Port-based pricing model.

    Port matching at a mirror node is an equality coupled to the arc
    variable, so only ports of used arcs are matched, and a link is marked
    used only when one of its arcs is.
    """
    L = graph.max_distance if L is None else L
    big = _effective_length(graph, L)
    ports = PortMap(graph)
    arcs = usable_arcs(graph)
    m = MilpModel(f"pricing_{s}_{t}")
    x = {a: m.add_var(f"x_{a}", vtype=VarType.BINARY) for a in arcs}
    links = sorted({graph.arcs[a].link for a in arcs})
    u = {e: m.add_var(f"u_{e}", vtype=VarType.BINARY) for e in links}
    yp, ym = {}, {}
    for v in range(len(graph.nodes)):
        hi = 0.0 if graph.is_fso(v) else big
        for i, a in enumerate(ports.out_ports[v]):
            yp[(v, i)] = m.add_var(f"yp_{v}_{i}", 0.0, hi)
        for j, a in enumerate(ports.in_ports[v]):
            ym[(v, j)] = m.add_var(f"ym_{v}_{j}", 0.0, big)
    z = {}
    for v in graph.mirror_nodes:
        for i in range(len(ports.out_ports[v])):
            for j in range(len(ports.in_ports[v])):
                z[(v, i, j)] = m.add_var(f"z_{v}_{i}_{j}", vtype=VarType.BINARY)

    obj = [(u[e], duals.get(e, 0.0)) for e in links]
    if arc_costs:
        obj += [(x[a], arc_costs.get(a, 0.0)) for a in arcs]
    q = {}
    for v, cost in sorted((node_costs or {}).items()):
        if cost and ports.in_ports[v]:
            q[v] = m.add_var(f"q_{v}", vtype=VarType.BINARY)
            obj.append((q[v], cost))
    m.set_objective(obj)
    for v, qv in q.items():
        for a in ports.in_ports[v]:
            m.add_constr([(x[a], 1.0), (qv, -1.0)], Sense.LE, 0.0, f"visit_{a}")

    for v in range(len(graph.nodes)):
        rhs = 1.0 if v == s else -1.0 if v == t else 0.0
        row = [(x[a], 1.0) for a in ports.out_ports[v]] + [(x[a], -1.0) for a in ports.in_ports[v]]
        m.add_constr(row, Sense.EQ, rhs, f"flow_{v}")
    for a in arcs:
        arc = graph.arcs[a]
        i = ports.gamma[(a, arc.head)]
        j = ports.gamma[(a, arc.tail)]
        m.add_constr(
            [(ym[(arc.head, i)], 1.0), (yp[(arc.tail, j)], -1.0), (x[a], -_resource_length(graph, a))],
            Sense.EQ, 0.0, f"dist_{a}",
        )
    for v in graph.mirror_nodes:
        for i in range(len(ports.out_ports[v])):
            for j in range(len(ports.in_ports[v])):
                zi = z[(v, i, j)]
                m.add_constr([(yp[(v, i)], 1.0), (ym[(v, j)], -1.0), (zi, big)], Sense.LE, big, f"fwdle_{v}_{i}_{j}")
                m.add_constr([(yp[(v, i)], 1.0), (ym[(v, j)], -1.0), (zi, -big)], Sense.GE, -big, f"fwdge_{v}_{i}_{j}")
        for i, a in enumerate(ports.out_ports[v]):
            m.add_constr(
                [(z[(v, i, j)], 1.0) for j in range(len(ports.in_ports[v]))] + [(x[a], -1.0)],
                Sense.EQ, 0.0, f"mout_{v}_{i}",
            )
        for j, a in enumerate(ports.in_ports[v]):
            m.add_constr(
                [(z[(v, i, j)], 1.0) for i in range(len(ports.out_ports[v]))] + [(x[a], -1.0)],
                Sense.EQ, 0.0, f"min_{v}_{j}",
            )
    for a in arcs:
        m.add_constr([(x[a], 1.0), (u[graph.arcs[a].link], -1.0)], Sense.LE, 0.0, f"use_{a}")
    for e in links:
        row = [(u[e], 1.0)] + [(x[a], -1.0) for a in (2 * e, 2 * e + 1) if a in x]
        m.add_constr(row, Sense.LE, 0.0, f"link_{e}")
    return PricingModel(m, ports, x, u, z)


def _decode_walk(graph: PotentialGraph, pm: PricingModel, xs, s: int, t: int) -> Tuple[Optional[List[int]], set]:
    """Walk the arc support from ``s``; at mirror nodes follow the port matching."""
    support = {a for a, j in pm.x.items() if xs[j] > 0.5}
    remaining = set(support)
    walk: List[int] = []
    v, came = s, None
    for _ in range(len(support) + 1):
        if v == t:
            return walk, remaining
        nxt = None
        if came is not None and not graph.is_fso(v):
            jport = pm.ports.gamma[(came, v)]
            for i, a in enumerate(pm.ports.out_ports[v]):
                if xs[pm.z[(v, i, jport)]] > 0.5 and a in remaining:
                    nxt = a
                    break
        if nxt is None:
            cands = sorted(a for a in pm.ports.out_ports[v] if a in remaining)
            nxt = cands[0] if cands else None
        if nxt is None:
            return None, remaining
        remaining.discard(nxt)
        walk.append(nxt)
        came, v = nxt, graph.arcs[nxt].head
    return None, remaining


def _valid(graph: PotentialGraph, path: Path, L: float) -> bool:
    seen = set()
    for v in path.nodes:
        if graph.is_fso(v):
            if v in seen:
                return False
            seen.add(v)
    dist = 0.0
    for a in path.arcs:
        dist += _resource_length(graph, a)
        if dist > L + 1e-6:
            return False
        if graph.is_fso(graph.arcs[a].head):
            dist = 0.0
    return True


def shortcut_fso_loops(graph: PotentialGraph, arcs: Sequence[int]) -> List[int]:
    """Drop closed sub-walks between two visits of one FSO node."""
    out: List[int] = []
    first: Dict[int, int] = {graph.arcs[arcs[0]].tail: 0}
    for a in arcs:
        out.append(a)
        h = graph.arcs[a].head
        if graph.is_fso(h):
            if h in first:
                del out[first[h]:]
                first = {k: v for k, v in first.items() if v <= first[h]}
            else:
                first[h] = len(out)
    return out


def _lazy_cuts(graph: PotentialGraph, pm: PricingModel, xs, s: int, walk, rest) -> List[Tuple[list, float]]:
    """Cuts valid for every simple s-t path that the current support violates.

    An FSO node is entered at most once (never, for ``s``), and a detached
    arc component whose node set avoids ``s`` must be entered from outside.
    """
    cuts = []
    used = [a for a, j in pm.x.items() if xs[j] > 0.5]
    indeg: Dict[int, int] = {}
    for a in used:
        h = graph.arcs[a].head
        indeg[h] = indeg.get(h, 0) + 1
    for v, n in sorted(indeg.items()):
        if graph.is_fso(v) and n > (0 if v == s else 1):
            cuts.append(([(pm.x[a], 1.0) for a in pm.ports.in_ports[v]], 0.0 if v == s else 1.0))
    comps: List[set] = []
    for a in sorted(rest):
        ends = {graph.arcs[a].tail, graph.arcs[a].head}
        hit = [c for c in comps if c[0] & ends]
        nodes, arcs = set(ends), {a}
        for c in hit:
            nodes |= c[0]
            arcs |= c[1]
            comps.remove(c)
        comps.append((nodes, arcs))
    for nodes, arcs in comps:
        if s in nodes:
            continue
        entering = [b for b in pm.x if graph.arcs[b].head in nodes and graph.arcs[b].tail not in nodes]
        if any(xs[pm.x[b]] > 0.5 for b in entering):
            continue
        row = [(pm.x[a], 1.0) for a in sorted(arcs)] + [(pm.x[b], -float(len(arcs))) for b in entering]
        cuts.append((row, 0.0))
    return cuts


def _support_trail(graph: PotentialGraph, support, s: int, t: int, L: float) -> Tuple[Optional[List[int]], bool]:
    """An s-t trail using every support arc once and obeying the path rules.

    The port matching the solver picked may split the support into a walk
    plus a detached cycle through a mirror node while another matching of the
    same arcs is a valid path.  Returns (trail, exhausted); ``exhausted`` is
    False when the search budget ran out before deciding.
    """
    out: Dict[int, List[int]] = {}
    for a in sorted(support):
        out.setdefault(graph.arcs[a].tail, []).append(a)
    budget = [TRAIL_BUDGET]
    used: set = set()
    trail: List[int] = []

    def dfs(v, dist, seen):
        if len(trail) == len(support):
            return v == t
        if v == t or budget[0] <= 0:
            return False
        budget[0] -= 1
        for a in out.get(v, ()):
            if a in used:
                continue
            h = graph.arcs[a].head
            d = dist + _resource_length(graph, a)
            if d > L + 1e-6:
                continue
            fso = graph.is_fso(h)
            if fso and h in seen:
                continue
            used.add(a)
            trail.append(a)
            if dfs(h, 0.0 if fso else d, seen | {h} if fso else seen):
                return True
            used.discard(a)
            trail.pop()
        return False

    found = dfs(s, 0.0, frozenset([s]))
    return (list(trail) if found else None), budget[0] > 0


def _solve_milp_pricing(
    graph: PotentialGraph, duals, s, t, L, arc_costs, node_costs=None, time_limit=None
) -> PricingResult:
    pm = build_pricing_milp(graph, duals, s, t, L, arc_costs, node_costs)
    # the FSO-entered-at-most-once cuts hold for every path: add them up front
    entry = [
        ([(pm.x[a], 1.0) for a in pm.ports.in_ports[v]], 0.0 if v == s else 1.0)
        for v in graph.fso_nodes if pm.ports.in_ports[v]
    ]
    model = _with_rows(pm.model, entry, 0)
    best: Optional[Tuple[float, Path]] = None
    rounds = 0
    undecided = False
    for rounds in range(1, NOGOOD_ROUNDS + 1):
        sol = solve_milp(model, time_limit=time_limit, backend="highs")
        if sol.x is None:
            break
        walk, rest = _decode_walk(graph, pm, sol.x, s, t)
        if walk:
            arcs = shortcut_fso_loops(graph, walk)
            candidate = graph.path_from_arcs(arcs)
            if _valid(graph, candidate, L):
                cost = path_cost(candidate, duals, arc_costs, node_costs)
                if best is None or cost < best[0] - 1e-12:
                    best = (cost, candidate)
            clean = not rest and arcs == walk
            if clean and best is not None and best[1] == candidate:
                return PricingResult(candidate, best[0], "milp", info={"rounds": rounds, "bound": sol.objective})
        if best is not None and sol.objective is not None and best[0] <= sol.objective + 1e-9:
            return PricingResult(best[1], best[0], "milp", info={"rounds": rounds, "bound": sol.objective})
        cuts = _lazy_cuts(graph, pm, sol.x, s, walk, rest)
        if not cuts:
            support = [a for a, j in pm.x.items() if sol.x[j] > 0.5]
            trail, decided = _support_trail(graph, support, s, t, L)
            if trail is not None:
                # same arcs, so the same cost as the solver's point: optimal
                candidate = graph.path_from_arcs(trail)
                cost = path_cost(candidate, duals, arc_costs, node_costs)
                return PricingResult(candidate, cost, "milp", info={"rounds": rounds, "bound": sol.objective})
            # no valid path uses exactly this arc support: exclude it
            undecided = undecided or not decided
            support = [j for a, j in pm.x.items() if sol.x[j] > 0.5]
            others = [j for a, j in pm.x.items() if sol.x[j] <= 0.5]
            cuts = [([(j, 1.0) for j in support] + [(j, -1.0) for j in others], len(support) - 1.0)]
        model = _with_rows(model, cuts, rounds)
    info = {"rounds": rounds, "nogood_limit": rounds == NOGOOD_ROUNDS}
    if undecided:
        info["trail_budget"] = True
    if best is None:
        return PricingResult(None, math.inf, "milp", info=info)
    return PricingResult(best[1], best[0], "milp", info=info)


def _with_rows(model: MilpModel, rows, k: int) -> MilpModel:
    copy = MilpModel(model.name)
    for v in model.variables:
        copy.add_var(v.name, v.lb, v.ub, v.vtype)
    for c in model.constraints:
        copy.add_constr(zip(c.indices, c.coefs), c.sense, c.rhs, c.name)
    copy.set_objective(model.objective, model.constant)
    for i, (row, rhs) in enumerate(rows):
        copy.add_constr(row, Sense.LE, rhs, f"cut_{k}_{i}")
    return copy


@dataclass(eq=False)
class _Label:
    node: int
    cost: float
    dist: float
    arcs: Tuple[int, ...]
    nodes: Tuple[int, ...]
    links: frozenset
    arcset: frozenset
    fso: frozenset
    visits: Dict[int, int]


def _dominates(a: _Label, b: _Label, duals, node_costs) -> bool:
    if a.dist > b.dist + 1e-12 or not a.fso <= b.fso or not a.arcset <= b.arcset:
        return False
    if any(n > b.visits.get(v, 0) for v, n in a.visits.items()):
        return False
    # b may still collect the negative weights of links only a has paid
    extra = sum(max(0.0, duals.get(e, 0.0)) for e in b.links - a.links)
    credit = sum(min(0.0, duals.get(e, 0.0)) for e in a.links - b.links)
    # a must still pay for nodes that only b has entered
    extra += sum(node_costs.get(v, 0.0) for v in b.visits if v not in a.visits)
    return a.cost + extra <= b.cost + credit + 1e-12


def _solve_labels(graph, duals, s, t, L, arc_costs, node_costs=None, dominance=True) -> PricingResult:
    arc_costs = arc_costs or {}
    node_costs = node_costs or {}
    allowed = set(usable_arcs(graph))
    out = [[a for a in graph.out_arcs[v] if a in allowed] for v in range(len(graph.nodes))]
    # A*-style bound: the rest of a path can still collect at most the
    # negative step of every link it has not used yet
    neg: Dict[int, float] = {}
    for a in sorted(allowed):
        e = graph.arcs[a].link
        neg[e] = min(neg.get(e, 0.0), arc_costs.get(a, 0.0) + duals.get(e, 0.0))
    neg_total = sum(neg.values())

    def key(cost, node, links):
        return cost if node == t else cost + neg_total - sum(neg.get(e, 0.0) for e in links)

    tick = itertools.count()
    start = _Label(s, 0.0, 0.0, (), (s,), frozenset(), frozenset(), frozenset([s]), {})
    heap = [(round(key(0.0, s, ()), 9), 0, (s,), next(tick), start)]
    kept: Dict[int, List[_Label]] = {v: [] for v in range(len(graph.nodes))}
    cap_hit = False
    truncated = math.inf
    while heap:
        _, _, _, _, lab = heapq.heappop(heap)
        if dominance and any(o is not lab and _dominates(o, lab, duals, node_costs) for o in kept[lab.node]):
            continue
        if lab.node == t:
            path = graph.path_from_arcs(lab.arcs)
            res = PricingResult(path, lab.cost, "labels", cap_hit=cap_hit and truncated < lab.cost - 1e-9)
            return res
        if dominance:
            kept[lab.node] = [o for o in kept[lab.node] if not _dominates(lab, o, duals, node_costs)]
        kept[lab.node].append(lab)
        for a in out[lab.node]:
            if a in lab.arcset:
                continue
            arc = graph.arcs[a]
            h = arc.head
            if graph.is_fso(h) and h in lab.fso:
                continue
            dist = lab.dist + _resource_length(graph, a)
            if dist > L + 1e-9:
                continue
            e = arc.link
            cost = lab.cost + arc_costs.get(a, 0.0) + (0.0 if e in lab.links else duals.get(e, 0.0))
            visits = lab.visits
            if not graph.is_fso(h):
                if visits.get(h, 0) >= VISIT_CAP:
                    cap_hit = True
                    truncated = min(truncated, key(cost, h, lab.links | {e}))
                    continue
                if h not in visits:
                    cost += node_costs.get(h, 0.0)
                visits = dict(visits)
                visits[h] = visits.get(h, 0) + 1
            child = _Label(
                h, cost, 0.0 if graph.is_fso(h) else dist, lab.arcs + (a,), lab.nodes + (h,),
                lab.links | {e}, lab.arcset | {a}, lab.fso | {h} if graph.is_fso(h) else lab.fso, visits,
            )
            if dominance and any(_dominates(o, child, duals, node_costs) for o in kept[h]):
                continue
            heapq.heappush(heap, (round(key(cost, h, child.links), 9), len(child.arcs), child.nodes, next(tick), child))
    return PricingResult(None, math.inf, "labels", cap_hit=cap_hit)


def smallest_step(
    graph: PotentialGraph, duals: Mapping[int, float], arc_costs: Optional[Mapping[int, float]] = None
) -> float:
    """Least cost of crossing one arc onto a fresh link.

    ``auto`` pricing keeps to the MILP when this is negative.
    """
    arc_costs = arc_costs or {}
    low = 0.0
    for a in usable_arcs(graph):
        low = min(low, arc_costs.get(a, 0.0) + min(0.0, duals.get(graph.arcs[a].link, 0.0)))
    return low


def solve_pricing(
    graph: PotentialGraph,
    duals: Mapping[int, float],
    s: int,
    t: int,
    L: Optional[float] = None,
    method: str = "auto",
    arc_costs: Optional[Mapping[int, float]] = None,
    dominance: bool = True,
    node_costs: Optional[Mapping[int, float]] = None,
) -> PricingResult:
    """Cheapest s-t path whose mirror segments each stay within ``L``.

    ``method="labels"`` is exact for weights of any sign: its search order
    adds a lower bound on what the unused negative links could still save.
    ``"auto"`` uses labels only when every arc step (arc cost plus link
    weight) is nonnegative, else the MILP, and also falls back to the MILP
    when the label search was truncated by the per-node visit cap.
    """
    if not (graph.is_fso(s) and graph.is_fso(t)) or s == t:
        raise ValidationError("pricing endpoints must be distinct FSO nodes")
    L = graph.max_distance if L is None else L
    duals = {e: float(v) for e, v in duals.items()}
    if node_costs and min(node_costs.values()) < 0:
        raise ValueError("node costs must be nonnegative")
    smallest = smallest_step(graph, duals, arc_costs)
    if method == "milp":
        return _solve_milp_pricing(graph, duals, s, t, L, arc_costs, node_costs)
    if method == "labels":
        return _solve_labels(graph, duals, s, t, L, arc_costs, node_costs, dominance)
    if method != "auto":
        raise ValueError(f"unknown pricing method {method!r}")
    if smallest < -NEG_TOL:
        return _solve_milp_pricing(graph, duals, s, t, L, arc_costs, node_costs)
    res = _solve_labels(graph, duals, s, t, L, arc_costs, node_costs, dominance)
    if res.cap_hit or (res.path is None and res.cap_hit):
        milp = _solve_milp_pricing(graph, duals, s, t, L, arc_costs, node_costs)
        milp.info["fallback"] = "visit cap"
        return milp
    return res
