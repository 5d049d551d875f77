"""Scenario ingestion: instance files, line of sight, potential graphs and
the random instance generator."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path as FilePath
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import CostWeights, Link, LinkKind, Node, NodeKind, PotentialGraph, ValidationError
from .reliability import ChannelParams, link_reliability, max_transmission_distance

PRNG_NAME = "PCG64"

Point = Tuple[float, float]


@dataclass(frozen=True)
class Obstacle:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValidationError(f"obstacle {self} has no area")


@dataclass(frozen=True)
class Instance:
    nodes: Tuple[Node, ...]
    obstacles: Tuple[Obstacle, ...] = ()
    fibers: Tuple[Tuple[int, int], ...] = ()
    nonlos: Tuple[Tuple[int, int], ...] = ()
    channel: ChannelParams = field(default_factory=ChannelParams)
    weights: CostWeights = field(default_factory=CostWeights)
    K: int = 2
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise ValidationError("node ids must be dense 0..|V|-1 in order")
        if self.K < 1:
            raise ValidationError("K must be at least 1")
        for a, b in self.fibers:
            if a == b:
                raise ValidationError(f"fiber ({a}, {b}) joins a node to itself")
            for v in (a, b):
                if not (0 <= v < len(self.nodes)) or not self.nodes[v].is_fso:
                    raise ValidationError(f"fiber endpoint {v} is not an FSO node")
        for a, b in self.nonlos:
            if a == b or not (0 <= a < len(self.nodes) and 0 <= b < len(self.nodes)):
                raise ValidationError(f"bad non-LOS pair ({a}, {b})")

    @property
    def n_fso(self) -> int:
        return sum(1 for n in self.nodes if n.is_fso)

    def with_fibers(self, fibers: Iterable[Tuple[int, int]]) -> "Instance":
        return replace(self, fibers=_sorted_pairs(fibers))


def _sorted_pairs(pairs: Iterable[Tuple[int, int]]) -> Tuple[Tuple[int, int], ...]:
    return tuple(sorted({(min(a, b), max(a, b)) for a, b in pairs}))


def line_of_sight(p: Point, q: Point, obstacles: Sequence[Obstacle]) -> bool:
    """True iff the open segment ``pq`` misses every obstacle interior.

    Touching a boundary or corner counts as clear.
    """
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    for ob in obstacles:
        t0, t1 = 0.0, 1.0
        blocked = True
        for start, delta, lo, hi in ((px, dx, ob.x_min, ob.x_max), (py, dy, ob.y_min, ob.y_max)):
            if delta == 0.0:
                if not (lo < start < hi):
                    blocked = False
                    break
                continue
            a, b = (lo - start) / delta, (hi - start) / delta
            if a > b:
                a, b = b, a
            t0, t1 = max(t0, a), min(t1, b)
            if t1 - t0 <= 1e-12:
                blocked = False
                break
        if blocked:
            return False
    return True


def build_potential_graph(instance: Instance) -> PotentialGraph:
    """Derive fiber, FSO and mirror links (with reliabilities) from an instance."""
    L = max_transmission_distance(instance.channel)
    nodes = instance.nodes
    fibers = set(_sorted_pairs(instance.fibers))
    nonlos = set(_sorted_pairs(instance.nonlos))
    links: List[Link] = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            a, b = nodes[i], nodes[j]
            dist = a.distance(b)
            if (i, j) in fibers:
                links.append(Link(len(links), LinkKind.FIBER, i, j, dist, 1.0, True))
            if dist >= L:
                continue
            los = (i, j) not in nonlos and line_of_sight((a.x, a.y), (b.x, b.y), instance.obstacles)
            if a.is_fso and b.is_fso:
                kind = LinkKind.FSO
            elif los:
                kind = LinkKind.MIRROR
            else:
                continue
            links.append(Link(len(links), kind, i, j, dist, link_reliability(dist, instance.channel), los))
    return PotentialGraph(nodes, links, L)


def generate_random_instance(
    n_fso: int,
    n_mirror: int,
    area_side: float = 3000.0,
    seed: int = 0,
    fiber_pair_fraction: float = 0.05,
    nlos_link_fraction: float = 0.10,
    channel: Optional[ChannelParams] = None,
    weights: Optional[CostWeights] = None,
    K: int = 2,
) -> Instance:
    """Uniform random scenario in a square, with forced non-LOS links and fibers.

    Randomness comes from numpy's PCG64 bit generator seeded with ``seed``.
    """
    if n_fso < 2:
        raise ValueError("need at least two FSO nodes")
    for name, frac in (("fiber_pair_fraction", fiber_pair_fraction), ("nlos_link_fraction", nlos_link_fraction)):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    channel = channel or ChannelParams()
    weights = weights or CostWeights()
    rng = np.random.Generator(np.random.PCG64(seed))
    coords = np.round(rng.uniform(0.0, area_side, size=(n_fso + n_mirror, 2)), 6)
    nodes = tuple(
        Node(i, NodeKind.FSO if i < n_fso else NodeKind.MIRROR, float(x), float(y))
        for i, (x, y) in enumerate(coords)
    )
    base = Instance(nodes, channel=channel, weights=weights, K=K, seed=seed)
    graph = build_potential_graph(base)
    beams = [l.pair for l in graph.links if l.kind is not LinkKind.FIBER]
    n_nlos = math.floor(nlos_link_fraction * len(beams))
    picked = rng.choice(len(beams), size=n_nlos, replace=False) if n_nlos else []
    nonlos = [beams[i] for i in sorted(int(i) for i in picked)]
    fso_pairs = [(i, j) for i in range(n_fso) for j in range(i + 1, n_fso)]
    n_fiber = math.floor(fiber_pair_fraction * len(fso_pairs))
    picked = rng.choice(len(fso_pairs), size=n_fiber, replace=False) if n_fiber else []
    fibers = [fso_pairs[i] for i in sorted(int(i) for i in picked)]
    return replace(base, fibers=_sorted_pairs(fibers), nonlos=_sorted_pairs(nonlos))


# ---------------------------------------------------------------------------
# canonical file format

_TOP = {"params", "nodes", "obstacles", "fibers", "nonlos"}
_PARAMS = {
    "K", "c1", "c2", "c3", "c4", "cn2", "intensity_ratio", "prng",
    "reliability_threshold", "seed", "wavelength",
}
_NODE = {"id", "kind", "x", "y"}
_OBSTACLE = {"x_min", "y_min", "x_max", "y_max"}
# channel constants span many decades, so they are written in exponent form
_SCIENTIFIC = {"cn2", "wavelength"}


class _Raw(str):
    """Pre-formatted JSON scalar."""


def _fmt(key: str, value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if key in _SCIENTIFIC:
        return _Raw("%.6e" % value)
    return _Raw("%.6f" % value)


def _emit(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, _Raw):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_emit(obj[k], indent + 1)}' for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list)) for x in obj):
            return "[" + ", ".join(_emit(x) for x in obj) + "]"
        items = [pad + "  " + _emit(x, indent + 1) for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(obj)


def dumps_instance(instance: Instance) -> str:
    ch, w = instance.channel, instance.weights
    params = {
        "K": instance.K,
        "c1": w.c1, "c2": w.c2, "c3": w.c3, "c4": w.c4,
        "cn2": ch.cn2,
        "intensity_ratio": ch.intensity_ratio,
        "prng": PRNG_NAME,
        "reliability_threshold": ch.reliability_threshold,
        "seed": instance.seed,
        "wavelength": ch.wavelength,
    }
    doc = {
        "params": {k: _fmt(k, v) for k, v in params.items()},
        "nodes": [
            {"id": n.id, "kind": n.kind.value, "x": _fmt("x", n.x), "y": _fmt("y", n.y)}
            for n in instance.nodes
        ],
        "obstacles": [
            {k: _fmt(k, getattr(o, k)) for k in sorted(_OBSTACLE)} for o in instance.obstacles
        ],
        "fibers": [list(p) for p in _sorted_pairs(instance.fibers)],
        "nonlos": [list(p) for p in _sorted_pairs(instance.nonlos)],
    }
    return _emit(doc) + "\n"


def _check_keys(where: str, got, allowed) -> None:
    extra = set(got) - set(allowed)
    if extra:
        raise ValidationError(f"unknown field(s) in {where}: {sorted(extra)}")
    missing = set(allowed) - set(got)
    if missing:
        raise ValidationError(f"missing field(s) in {where}: {sorted(missing)}")


def loads_instance(text: str) -> Instance:
    doc = json.loads(text)
    _check_keys("instance", doc, _TOP)
    p = doc["params"]
    _check_keys("params", p, _PARAMS)
    if p["prng"] != PRNG_NAME:
        raise ValidationError(f"unsupported prng {p['prng']!r}")
    nodes = []
    for raw in doc["nodes"]:
        _check_keys("node", raw, _NODE)
        nodes.append(Node(int(raw["id"]), NodeKind(raw["kind"]), float(raw["x"]), float(raw["y"])))
    obstacles = []
    for raw in doc["obstacles"]:
        _check_keys("obstacle", raw, _OBSTACLE)
        obstacles.append(Obstacle(**{k: float(v) for k, v in raw.items()}))
    return Instance(
        nodes=tuple(nodes),
        obstacles=tuple(obstacles),
        fibers=_sorted_pairs(tuple(x) for x in doc["fibers"]),
        nonlos=_sorted_pairs(tuple(x) for x in doc["nonlos"]),
        channel=ChannelParams(
            wavelength=float(p["wavelength"]),
            cn2=float(p["cn2"]),
            intensity_ratio=float(p["intensity_ratio"]),
            reliability_threshold=float(p["reliability_threshold"]),
        ),
        weights=CostWeights(float(p["c1"]), float(p["c2"]), float(p["c3"]), float(p["c4"])),
        K=int(p["K"]),
        seed=None if p["seed"] is None else int(p["seed"]),
    )


def write_instance(instance: Instance, path: Union[str, FilePath]) -> None:
    FilePath(path).write_text(dumps_instance(instance), encoding="utf-8")


def read_instance(path: Union[str, FilePath]) -> Instance:
    return loads_instance(FilePath(path).read_text(encoding="utf-8"))


def instance_hash(instance: Instance) -> str:
    return hashlib.sha256(dumps_instance(instance).encode("utf-8")).hexdigest()
