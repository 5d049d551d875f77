"""Independent checker for solver output.

Nothing here trusts solver bookkeeping: paths are rebuilt from node and
link-kind sequences, every rule is re-checked, devices are recounted and the
objective is recomputed.  Disjointness is decided by a direct pairwise
comparison of beam links.  A unit-capacity max-flow on the links used by the
reported paths (fibers uncapacitated) is run as a second witness; it is
sound but incomplete when one path repeats a mirror link, and when it comes
out short the pooled-path integer check decides.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .core import CostWeights, LinkKind, PotentialGraph

LENGTH_TOL = 1e-6
OBJ_TOL = 1e-6
BRUTE_FORCE_NODES = 6


@dataclass
class Verdict:
    ok: bool
    problems: List[str] = field(default_factory=list)
    recount: Dict[str, object] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, object]:
        return {"ok": self.ok, "problems": list(self.problems)}


@dataclass(frozen=True)
class _Hop:
    u: int
    v: int
    link: int


def _resolve(graph: PotentialGraph, nodes: Sequence[int], kinds: Sequence[str], problems: List[str]) -> Optional[List[_Hop]]:
    if len(nodes) < 2 or len(kinds) != len(nodes) - 1:
        problems.append(f"path {list(nodes)} is malformed")
        return None
    hops = []
    for (u, v), kind in zip(zip(nodes, nodes[1:]), kinds):
        try:
            e = graph.link_between(u, v, LinkKind(kind))
        except ValueError:
            e = None
        if e is None:
            problems.append(f"path {list(nodes)}: no {kind} link between {u} and {v}")
            return None
        hops.append(_Hop(u, v, e))
    return hops


def _segments(graph: PotentialGraph, nodes: Sequence[int], hops: Sequence[_Hop]):
    """(start index, end index, hops) for each FSO-to-FSO stretch."""
    out, start = [], 0
    for i in range(1, len(nodes)):
        if graph.nodes[nodes[i]].is_fso:
            out.append((start, i, hops[start:i]))
            start = i
    return out


def _check_path(graph: PotentialGraph, s: int, t: int, nodes: Sequence[int], hops: Sequence[_Hop], problems: List[str]) -> None:
    tag = f"commodity ({s},{t}) path {list(nodes)}"
    if {nodes[0], nodes[-1]} != {s, t}:
        problems.append(f"{tag} does not join its endpoints")
    if not graph.nodes[nodes[0]].is_fso or not graph.nodes[nodes[-1]].is_fso:
        problems.append(f"{tag} must start and end at FSO nodes")
        return
    fso = [v for v in nodes if graph.nodes[v].is_fso]
    if len(fso) != len(set(fso)):
        problems.append(f"{tag} revisits an FSO node")
    for h in hops:
        link = graph.links[h.link]
        if link.kind is not LinkKind.FIBER and not link.los:
            problems.append(f"{tag} beams over non-LOS link ({h.u},{h.v})")
    for i, j, seg in _segments(graph, nodes, hops):
        if len(seg) > 1:
            length = sum(graph.links[h.link].length for h in seg)
            if length > graph.max_distance + LENGTH_TOL:
                problems.append(f"{tag}: mirror stretch {list(nodes[i:j + 1])} is {length:.3f} m > L")
            if graph.link_between(nodes[i], nodes[j], LinkKind.FSO) is None:
                problems.append(f"{tag}: mirror stretch {list(nodes[i:j + 1])} joins FSO nodes farther than L")
            if any(graph.links[h.link].kind is not LinkKind.MIRROR for h in seg):
                problems.append(f"{tag}: mirror stretch {list(nodes[i:j + 1])} mixes link kinds")


def _beams(graph: PotentialGraph, hops: Sequence[_Hop]) -> Set[int]:
    return {h.link for h in hops if graph.links[h.link].kind is not LinkKind.FIBER}


def _flow_witness(graph: PotentialGraph, s: int, t: int, hop_lists: Sequence[Sequence[_Hop]], K: int) -> bool:
    used = {h.link for hops in hop_lists for h in hops}
    n = len(graph.nodes)
    cap: Dict[Tuple[int, int], int] = defaultdict(int)
    for e in used:
        link = graph.links[e]
        c = K if link.kind is LinkKind.FIBER else 1
        cap[(link.p, link.q)] += c
        cap[(link.q, link.p)] += c
    if not cap:
        return False
    rows, cols = zip(*cap.keys())
    mat = csr_matrix((np.array(list(cap.values()), dtype=np.int32), (rows, cols)), shape=(n, n))
    return maximum_flow(mat, s, t).flow_value >= K


def _pool_witness(beam_sets: Sequence[Set[int]], K: int) -> bool:
    """Exhaustive search for K pairwise disjoint members of the pool."""
    free = [i for i, b in enumerate(beam_sets) if not b]
    rest = [i for i, b in enumerate(beam_sets) if b]
    if free:
        return True
    for combo in itertools.combinations(rest, K):
        sets = [beam_sets[i] for i in combo]
        if sum(len(b) for b in sets) == len(set().union(*sets)):
            return True
    return False


def _enumerate_paths(
    graph: PotentialGraph, s: int, t: int, limit: int = 200_000
) -> Optional[Set[Tuple[Tuple[int, ...], Tuple[int, ...]]]]:
    """All valid (nodes, links) walks from s to t, or None past ``limit``.

    Valid means: no FSO revisit, beams in LOS, every stretch between FSO
    nodes realizes a potential FSO link within L and uses each of its arcs
    at most once.  Mirror nodes may recur across stretches.
    """
    found = set()
    L = graph.max_distance
    adj = defaultdict(list)
    for link in graph.links:
        if link.kind is not LinkKind.FIBER and not link.los:
            continue
        adj[link.p].append((link.q, link.id))
        adj[link.q].append((link.p, link.id))
    overflow = False

    def dfs(v, nodes, links, arcs, dist, start):
        nonlocal overflow
        if len(found) > limit:
            overflow = True
            return
        if v == t:
            found.add((tuple(nodes), tuple(links)))
            return
        for w, e in adj[v]:
            if (v, w, e) in arcs:
                continue
            link = graph.links[e]
            if link.kind is LinkKind.FIBER and v != start:
                continue
            nd = dist + (0.0 if link.kind is LinkKind.FIBER else link.length)
            if nd > L + LENGTH_TOL:
                continue
            if graph.nodes[w].is_fso:
                if w in nodes:
                    continue
                if not graph.nodes[v].is_fso and graph.link_between(start, w, LinkKind.FSO) is None:
                    continue
                nodes.append(w); links.append(e)
                dfs(w, nodes, links, set(), 0.0, w)
            else:
                if link.kind is LinkKind.FIBER:
                    continue
                nodes.append(w); links.append(e); arcs.add((v, w, e))
                dfs(w, nodes, links, arcs, nd, start)
                arcs.discard((v, w, e))
            nodes.pop(); links.pop()

    dfs(s, [s], [], set(), 0.0, s)
    return None if overflow else found


def recount(graph: PotentialGraph, per_commodity: Mapping[int, Sequence[Tuple[Sequence[int], Sequence[_Hop]]]]) -> Dict[str, object]:
    """Installed copies per FSO pair: the most any one commodity needs."""
    copies: Dict[Tuple[int, int], int] = defaultdict(int)
    mirrors: Dict[Tuple[int, int], int] = defaultdict(int)
    leased: Set[int] = set()
    beams: Set[int] = set()
    for d, plist in per_commodity.items():
        hops_here: Dict[Tuple[int, int], int] = defaultdict(int)
        mir_here: Dict[Tuple[int, int], int] = defaultdict(int)
        for nodes, hops in plist:
            beams |= _beams(graph, hops)
            for i, j, seg in _segments(graph, nodes, hops):
                if len(seg) == 1 and graph.links[seg[0].link].kind is LinkKind.FIBER:
                    continue
                pair = (min(nodes[i], nodes[j]), max(nodes[i], nodes[j]))
                hops_here[pair] += 1
                mir_here[pair] += j - i - 1
                leased.update(nodes[i + 1:j])
        for pair, n in hops_here.items():
            copies[pair] = max(copies[pair], n)
        for pair, n in mir_here.items():
            mirrors[pair] = max(mirrors[pair], n)
    return {
        "F": 2 * sum(copies.values()),
        "M": sum(mirrors.values()),
        "N": len(leased),
        "established": sorted(beams),
        "leased": sorted(leased),
    }


def verify_report(graph: PotentialGraph, report: Mapping, K: Optional[int] = None) -> Verdict:
    """Check a run report (the dict form written by the report module)."""
    problems: List[str] = []
    K = int(report.get("K", 0)) if K is None else K
    if K < 1:
        return Verdict(False, [f"K must be at least 1 (got {K})"])
    w = report.get("weights", {})
    weights = CostWeights(w.get("c1", 4.0), w.get("c2", 2.0), w.get("c3", 1.0), w.get("c4", 0.4))
    by_pair: Dict[Tuple[int, int], list] = {}
    for entry in report.get("paths", []):
        s, t = entry["commodity"]
        by_pair[(min(s, t), max(s, t))] = entry["paths"]

    resolved: Dict[int, List[Tuple[Sequence[int], List[_Hop]]]] = {}
    small = len(graph.nodes) <= BRUTE_FORCE_NODES
    flow_checks = {"witnessed": 0, "pool_fallback": 0}
    for c in graph.commodities:
        plist = by_pair.get(c.pair)
        if plist is None:
            problems.append(f"commodity {c.pair} has no paths")
            continue
        if len(plist) != K:
            problems.append(f"commodity {c.pair} has {len(plist)} paths, needs {K}")
        items = []
        for p in plist:
            hops = _resolve(graph, p["nodes"], p["kinds"], problems)
            if hops is None:
                continue
            _check_path(graph, c.source, c.dest, p["nodes"], hops, problems)
            items.append((tuple(p["nodes"]), hops))
        resolved[c.id] = items
        beam_sets = [_beams(graph, hops) for _, hops in items]
        for a, b in itertools.combinations(range(len(beam_sets)), 2):
            shared = beam_sets[a] & beam_sets[b]
            if shared:
                problems.append(f"commodity {c.pair}: paths {a} and {b} share beam links {sorted(shared)}")
        if len(items) == K and items:
            if _flow_witness(graph, c.source, c.dest, [h for _, h in items], K):
                flow_checks["witnessed"] += 1
            else:
                flow_checks["pool_fallback"] += 1
                if not _pool_witness(beam_sets, K):
                    problems.append(f"commodity {c.pair}: no {K} disjoint paths among those reported")
        if small and items:
            valid = _enumerate_paths(graph, c.source, c.dest)
            for nodes, hops in items if valid is not None else ():
                fwd = (tuple(nodes), tuple(h.link for h in hops))
                back = (tuple(reversed(nodes)), tuple(h.link for h in reversed(hops)))
                if fwd not in valid and back not in valid:
                    problems.append(f"commodity {c.pair}: path {list(nodes)} not found by exhaustive enumeration")

    counts = recount(graph, resolved)
    dev = report.get("devices", {})
    for key in ("F", "M", "N"):
        if dev.get(key) != counts[key]:
            problems.append(f"device count {key}: report says {dev.get(key)}, recount gives {counts[key]}")
    reliability = sum(graph.links[e].reliability for e in counts["established"])
    terms = {
        "transceivers": weights.c1 * counts["F"],
        "leased_nodes": weights.c2 * counts["N"],
        "mirrors": weights.c3 * counts["M"],
        "reliability": -weights.c4 * reliability,
    }
    objective = sum(terms.values())
    claimed = report.get("objective")
    if claimed is None or abs(float(claimed) - objective) > OBJ_TOL * (1 + abs(objective)):
        problems.append(f"objective: report says {claimed}, recomputation gives {objective!r}")
    for name, value in terms.items():
        got = report.get("terms", {}).get(name)
        if got is None or abs(float(got) - value) > OBJ_TOL * (1 + abs(value)):
            problems.append(f"term {name}: report says {got}, recomputation gives {value!r}")
    total = graph.total_potential_reliability()
    norm = reliability / total if total > 0 else 0.0
    got = report.get("normalized_reliability")
    if got is None or abs(float(got) - norm) > 1e-9:
        problems.append(f"normalized reliability: report says {got}, recomputation gives {norm!r}")
    counts.update({"objective": objective, "terms": terms, "normalized_reliability": norm, **flow_checks})
    return Verdict(not problems, problems, counts)
