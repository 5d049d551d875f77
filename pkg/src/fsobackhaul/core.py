"""Domain types shared by every planner module.

Nodes, links and arcs carry dense integer ids assigned in input order, so
every iteration order in the package is derived from ids and runs are
deterministic.  A :class:`Path` is stored as an arc sequence, which keeps
mirror revisits such as ``(0, 3, 2, 3, 1)`` representable.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple


class ValidationError(ValueError):
    """Malformed instance, path or topology."""


class NotKConnectableError(RuntimeError):
    """Raised when some commodity cannot get K link-disjoint paths."""

    def __init__(self, message: str, commodity: Optional["Commodity"] = None):
        super().__init__(message)
        self.commodity = commodity


class NodeKind(str, Enum):
    FSO = "fso"
    MIRROR = "mirror"


class LinkKind(str, Enum):
    FIBER = "fiber"
    FSO = "fso"
    MIRROR = "mirror"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    x: float
    y: float

    @property
    def is_fso(self) -> bool:
        return self.kind is NodeKind.FSO

    def distance(self, other: "Node") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Link:
    id: int
    kind: LinkKind
    p: int
    q: int
    length: float
    reliability: float = 1.0
    los: bool = True

    def other(self, v: int) -> int:
        if v == self.p:
            return self.q
        if v == self.q:
            return self.p
        raise ValueError(f"node {v} is not an endpoint of link {self.id}")

    @property
    def pair(self) -> Tuple[int, int]:
        return (min(self.p, self.q), max(self.p, self.q))

    @property
    def establishable(self) -> bool:
        """True for links that can carry a direct beam (LOS FSO or mirror)."""
        return self.kind is not LinkKind.FIBER and self.los


@dataclass(frozen=True)
class Arc:
    id: int
    link: int
    tail: int
    head: int
    length: float


@dataclass(frozen=True)
class Commodity:
    id: int
    source: int
    dest: int
    distance: float

    @property
    def pair(self) -> Tuple[int, int]:
        return (min(self.source, self.dest), max(self.source, self.dest))


@dataclass(frozen=True)
class CostWeights:
    """Weights of the four objective terms.

    ``c1`` per transceiver, ``c2`` per leased mirror node, ``c3`` per mirror,
    ``c4`` per unit of established-link reliability (a bonus).
    """

    c1: float = 4.0
    c2: float = 2.0
    c3: float = 1.0
    c4: float = 0.4

    def __post_init__(self) -> None:
        for name in ("c1", "c2", "c3", "c4"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValidationError(f"cost weight {name} must be finite and >= 0, got {value}")

    def as_dict(self) -> Dict[str, float]:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4}


class PotentialGraph:
    """Nodes plus the derived fiber / FSO / mirror link sets and their arcs.

    Link ``e`` owns arcs ``2e`` (``p -> q``) and ``2e + 1`` (``q -> p``).
    """

    def __init__(self, nodes: Sequence[Node], links: Sequence[Link], max_distance: float):
        for i, node in enumerate(nodes):
            if node.id != i:
                raise ValidationError("node ids must be dense and in order")
        for i, link in enumerate(links):
            if link.id != i:
                raise ValidationError("link ids must be dense and in order")
        self.nodes: Tuple[Node, ...] = tuple(nodes)
        self.links: Tuple[Link, ...] = tuple(links)
        self.max_distance = float(max_distance)
        arcs = []
        for link in self.links:
            arcs.append(Arc(2 * link.id, link.id, link.p, link.q, link.length))
            arcs.append(Arc(2 * link.id + 1, link.id, link.q, link.p, link.length))
        self.arcs: Tuple[Arc, ...] = tuple(arcs)

        self.out_arcs: List[List[int]] = [[] for _ in self.nodes]
        self.in_arcs: List[List[int]] = [[] for _ in self.nodes]
        for arc in self.arcs:
            self.out_arcs[arc.tail].append(arc.id)
            self.in_arcs[arc.head].append(arc.id)

        self._by_pair: Dict[Tuple[int, int, LinkKind], int] = {}
        for link in self.links:
            key = (*link.pair, link.kind)
            if key in self._by_pair:
                raise ValidationError(f"duplicate {link.kind.value} link between {link.pair}")
            self._by_pair[key] = link.id
            self._check_link(link)

        self.fso_nodes: Tuple[int, ...] = tuple(n.id for n in self.nodes if n.is_fso)
        self.mirror_nodes: Tuple[int, ...] = tuple(n.id for n in self.nodes if not n.is_fso)
        commodities = []
        for i, s in enumerate(self.fso_nodes):
            for t in self.fso_nodes[i + 1:]:
                commodities.append(
                    Commodity(len(commodities), s, t, self.nodes[s].distance(self.nodes[t]))
                )
        self.commodities: Tuple[Commodity, ...] = tuple(commodities)
        self._commodity_by_pair = {c.pair: c for c in self.commodities}

    def _check_link(self, link: Link) -> None:
        p, q = self.nodes[link.p], self.nodes[link.q]
        if link.p == link.q:
            raise ValidationError(f"link {link.id} is a self loop")
        if link.kind in (LinkKind.FIBER, LinkKind.FSO) and not (p.is_fso and q.is_fso):
            raise ValidationError(f"{link.kind.value} link {link.id} must join two FSO nodes")
        if link.kind is LinkKind.MIRROR and p.is_fso and q.is_fso:
            raise ValidationError(f"mirror link {link.id} needs a mirror endpoint")

    # lookups -------------------------------------------------------------
    def link_between(self, u: int, v: int, kind: LinkKind) -> Optional[int]:
        return self._by_pair.get((min(u, v), max(u, v), kind))

    def arc_of(self, link_id: int, tail: int) -> int:
        link = self.links[link_id]
        if tail == link.p:
            return 2 * link_id
        if tail == link.q:
            return 2 * link_id + 1
        raise ValueError(f"node {tail} is not an endpoint of link {link_id}")

    def commodity(self, s: int, t: int) -> Commodity:
        return self._commodity_by_pair[(min(s, t), max(s, t))]

    def links_of_kind(self, kind: LinkKind) -> List[int]:
        return [link.id for link in self.links if link.kind is kind]

    def is_fso(self, v: int) -> bool:
        return self.nodes[v].is_fso

    @property
    def nonlos_links(self) -> List[int]:
        return [l.id for l in self.links if l.kind is LinkKind.FSO and not l.los]

    def total_potential_reliability(self) -> float:
        return sum(l.reliability for l in self.links if l.establishable)

    def path_from_nodes(
        self, nodes: Sequence[int], kinds: Optional[Sequence[LinkKind]] = None
    ) -> "Path":
        """Build a path from a node sequence.

        Without ``kinds`` each hop takes the FSO link when both endpoints are
        FSO nodes and LOS, else a fiber, else the mirror link.
        """
        arcs = []
        for i, (u, v) in enumerate(zip(nodes, nodes[1:])):
            if kinds is not None:
                link = self.link_between(u, v, LinkKind(kinds[i]))
            else:
                link = None
                if self.is_fso(u) and self.is_fso(v):
                    cand = self.link_between(u, v, LinkKind.FSO)
                    if cand is not None and self.links[cand].los:
                        link = cand
                    if link is None:
                        link = self.link_between(u, v, LinkKind.FIBER)
                else:
                    link = self.link_between(u, v, LinkKind.MIRROR)
            if link is None:
                raise ValidationError(f"no usable link between {u} and {v}")
            arcs.append(self.arc_of(link, u))
        return self.path_from_arcs(arcs)

    def path_from_arcs(self, arcs: Sequence[int]) -> "Path":
        if not arcs:
            raise ValidationError("a path needs at least one arc")
        nodes = [self.arcs[arcs[0]].tail]
        for a in arcs:
            arc = self.arcs[a]
            if arc.tail != nodes[-1]:
                raise ValidationError(f"arc {a} does not continue the path at node {nodes[-1]}")
            nodes.append(arc.head)
        return Path(tuple(nodes), tuple(arcs), tuple(self.arcs[a].link for a in arcs))

    def __repr__(self) -> str:
        counts = {k.value: len(self.links_of_kind(k)) for k in LinkKind}
        return f"PotentialGraph(|V|={len(self.nodes)}, links={counts}, L={self.max_distance:.2f})"


@dataclass(frozen=True)
class Path:
    nodes: Tuple[int, ...]
    arcs: Tuple[int, ...]
    links: Tuple[int, ...]

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def dest(self) -> int:
        return self.nodes[-1]

    def reversed(self, graph: PotentialGraph) -> "Path":
        return graph.path_from_arcs([a ^ 1 for a in reversed(self.arcs)])

    def oriented(self, graph: PotentialGraph, source: int) -> "Path":
        return self if self.source == source else self.reversed(graph)

    def link_set(self, graph: PotentialGraph, include_fiber: bool = False) -> frozenset:
        return frozenset(
            e for e in self.links if include_fiber or graph.links[e].kind is not LinkKind.FIBER
        )

    def max_link_repeats(self) -> int:
        counts: Dict[int, int] = defaultdict(int)
        for e in self.links:
            counts[e] += 1
        return max(counts.values())

    def __len__(self) -> int:
        return len(self.arcs)


@dataclass(frozen=True)
class Segment:
    """One FSO-to-FSO hop of a path.

    ``kind`` is ``"direct"`` (single LOS FSO link), ``"mirror"`` (one or more
    interior mirror nodes) or ``"fiber"``.
    """

    nodes: Tuple[int, ...]
    links: Tuple[int, ...]
    kind: str
    length: float

    @property
    def interior(self) -> Tuple[int, ...]:
        return self.nodes[1:-1]

    @property
    def pair(self) -> Tuple[int, int]:
        return (min(self.nodes[0], self.nodes[-1]), max(self.nodes[0], self.nodes[-1]))

    @property
    def key(self) -> Tuple[Tuple[int, int], Tuple[int, ...]]:
        """(unordered endpoint pair, interior read from the smaller endpoint)."""
        interior = self.interior if self.nodes[0] <= self.nodes[-1] else self.interior[::-1]
        return (self.pair, interior)


def mirror_segments(path: Path, graph: PotentialGraph) -> List[Segment]:
    """Split ``path`` at every FSO node into maximal mirror-path segments."""
    if not graph.is_fso(path.source) or not graph.is_fso(path.dest):
        raise ValidationError("a path must start and end at FSO nodes")
    segments: List[Segment] = []
    start = 0
    for i in range(1, len(path.nodes)):
        if not graph.is_fso(path.nodes[i]):
            continue
        links = path.links[start:i]
        kinds = {graph.links[e].kind for e in links}
        if len(links) == 1 and LinkKind.FIBER in kinds:
            kind = "fiber"
        elif len(links) == 1:
            kind = "direct"
        else:
            kind = "mirror"
        segments.append(
            Segment(
                path.nodes[start: i + 1],
                links,
                kind,
                sum(graph.links[e].length for e in links),
            )
        )
        start = i
    return segments


def join_segments(segments: Sequence[Segment]) -> Tuple[int, ...]:
    """Inverse of :func:`mirror_segments` on node sequences."""
    nodes: List[int] = list(segments[0].nodes)
    for seg in segments[1:]:
        if seg.nodes[0] != nodes[-1]:
            raise ValidationError("segments do not chain")
        nodes.extend(seg.nodes[1:])
    return tuple(nodes)


def validate_path(path: Path, graph: PotentialGraph, commodity: Optional[Commodity] = None) -> None:
    """Raise :class:`ValidationError` unless ``path`` is a feasible flow path."""
    if commodity is not None and {path.source, path.dest} != {commodity.source, commodity.dest}:
        raise ValidationError(f"path {path.nodes} does not connect commodity {commodity.pair}")
    seen_fso = set()
    for v in path.nodes:
        if graph.is_fso(v):
            if v in seen_fso:
                raise ValidationError(f"path {path.nodes} revisits FSO node {v}")
            seen_fso.add(v)
    for seg in mirror_segments(path, graph):
        for e in seg.links:
            link = graph.links[e]
            if link.kind is not LinkKind.FIBER and not link.los:
                raise ValidationError(f"path {path.nodes} uses non-LOS link {e} as a beam")
        if seg.kind == "mirror":
            if seg.length > graph.max_distance + 1e-6:
                raise ValidationError(
                    f"mirror segment {seg.nodes} is {seg.length:.2f} m long (> {graph.max_distance:.2f})"
                )
            if graph.link_between(seg.nodes[0], seg.nodes[-1], LinkKind.FSO) is None:
                raise ValidationError(f"mirror segment {seg.nodes} realizes no potential FSO link")


def paths_link_disjoint(paths: Sequence[Path], graph: PotentialGraph) -> bool:
    """True iff no FSO or mirror link is shared by two distinct paths."""
    seen = set()
    for path in paths:
        own = path.link_set(graph)
        if seen & own:
            return False
        seen |= own
    return True


@dataclass
class DeviceCount:
    F: int
    M: int
    N: int
    copies: Dict[Tuple[int, int], int]
    mirrors: Dict[Tuple[int, int], int]
    mirror_nodes: Tuple[int, ...]


def count_devices(paths: Mapping[int, Sequence[Path]], graph: PotentialGraph) -> DeviceCount:
    """Count transceivers, mirrors and leased mirror nodes for chosen paths.

    Installations are shared across commodities per FSO pair: the number of
    copies between two FSO nodes is the largest number of hops any single
    commodity routes between them, and the mirror count is likewise the
    largest per-commodity mirror usage.  Every copy carries two transceivers.
    """
    copies: Dict[Tuple[int, int], int] = defaultdict(int)
    mirrors: Dict[Tuple[int, int], int] = defaultdict(int)
    nodes = set()
    for d in sorted(paths):
        hops: Dict[Tuple[int, int], int] = defaultdict(int)
        used: Dict[Tuple[int, int], int] = defaultdict(int)
        for path in paths[d]:
            for seg in mirror_segments(path, graph):
                if seg.kind == "fiber":
                    continue
                hops[seg.pair] += 1
                used[seg.pair] += len(seg.interior)
                nodes.update(seg.interior)
        for pair, n in hops.items():
            copies[pair] = max(copies[pair], n)
        for pair, m in used.items():
            mirrors[pair] = max(mirrors[pair], m)
    return DeviceCount(
        F=2 * sum(copies.values()),
        M=sum(mirrors.values()),
        N=len(nodes),
        copies=dict(sorted(copies.items())),
        mirrors=dict(sorted((k, v) for k, v in mirrors.items() if v)),
        mirror_nodes=tuple(sorted(nodes)),
    )


@dataclass
class Topology:
    """A designed backhaul: per-commodity paths plus derived device counts."""

    K: int
    weights: CostWeights
    paths: Dict[int, List[Path]]
    established_links: Tuple[int, ...]
    leased_nodes: Tuple[int, ...]
    devices: DeviceCount
    terms: Dict[str, float]
    objective: float
    normalized_reliability: float
    status: str = "optimal"
    bound: Optional[float] = None
    model_objective: Optional[float] = None
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def F(self) -> int:
        return self.devices.F

    @property
    def M(self) -> int:
        return self.devices.M

    @property
    def N(self) -> int:
        return self.devices.N

    @classmethod
    def from_paths(
        cls,
        graph: PotentialGraph,
        paths: Mapping[int, Sequence[Path]],
        K: int,
        weights: CostWeights,
        **extra,
    ) -> "Topology":
        chosen = {d: list(paths[d]) for d in sorted(paths)}
        established = sorted(
            {e for ps in chosen.values() for p in ps for e in p.links if graph.links[e].kind is not LinkKind.FIBER}
        )
        devices = count_devices(chosen, graph)
        reliability = sum(graph.links[e].reliability for e in established)
        terms = {
            "transceivers": weights.c1 * devices.F,
            "leased_nodes": weights.c2 * devices.N,
            "mirrors": weights.c3 * devices.M,
            "reliability": -weights.c4 * reliability,
        }
        total = graph.total_potential_reliability()
        return cls(
            K=K,
            weights=weights,
            paths=chosen,
            established_links=tuple(established),
            leased_nodes=devices.mirror_nodes,
            devices=devices,
            terms=terms,
            objective=sum(terms.values()),
            normalized_reliability=reliability / total if total > 0 else 0.0,
            **extra,
        )

    def check(self, graph: PotentialGraph) -> None:
        """Raise :class:`ValidationError` if any commodity's paths are infeasible."""
        for c in graph.commodities:
            ps = self.paths.get(c.id)
            if ps is None or len(ps) != self.K:
                raise ValidationError(f"commodity {c.pair} needs {self.K} paths")
            for p in ps:
                validate_path(p, graph, c)
            if not paths_link_disjoint(ps, graph):
                raise ValidationError(f"paths of commodity {c.pair} share a beam link")


def objective_of(graph: PotentialGraph, paths: Mapping[int, Sequence[Path]], weights: CostWeights) -> float:
    return Topology.from_paths(graph, paths, 1, weights).objective


def iter_pairs(items: Iterable[int]) -> Iterable[Tuple[int, int]]:
    items = list(items)
    for i, a in enumerate(items):
        for b in items[i + 1:]:
            yield a, b
