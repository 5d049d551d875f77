"""Run reports (stable-key JSON) and DOT renderings of topologies."""

from __future__ import annotations

import json
import math
from pathlib import Path as FilePath
from typing import Dict, List, Mapping, Optional, Union

from .core import LinkKind, Path, PotentialGraph, Topology

REPORT_VERSION = 1


def path_record(path: Path, graph: PotentialGraph) -> Dict[str, list]:
    return {"nodes": list(path.nodes), "kinds": [graph.links[e].kind.value for e in path.links]}


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def build_report(
    topo: Topology,
    graph: PotentialGraph,
    instance_hash: str,
    solver: str,
    wall_time_s: Optional[float] = None,
    verdict: Optional[Mapping] = None,
) -> Dict[str, object]:
    """Structured run report.  ``verdict`` must come from the verifier."""
    comm = {c.id: c for c in graph.commodities}
    return {
        "version": REPORT_VERSION,
        "instance_hash": instance_hash,
        "solver": solver,
        "status": topo.status,
        "K": topo.K,
        "weights": topo.weights.as_dict(),
        "devices": {"F": topo.F, "M": topo.M, "N": topo.N},
        "objective": _clean(topo.objective),
        "terms": {k: _clean(v) for k, v in sorted(topo.terms.items())},
        "normalized_reliability": _clean(topo.normalized_reliability),
        "model_objective": _clean(topo.model_objective),
        "bound": _clean(topo.bound),
        "wall_time_s": None if wall_time_s is None else round(wall_time_s, 6),
        "established_links": [
            [graph.links[e].p, graph.links[e].q, graph.links[e].kind.value] for e in topo.established_links
        ],
        "leased_nodes": list(topo.leased_nodes),
        "max_link_repeats": max((p.max_link_repeats() for ps in topo.paths.values() for p in ps), default=0),
        "paths": [
            {"commodity": [comm[d].source, comm[d].dest], "paths": [path_record(p, graph) for p in topo.paths[d]]}
            for d in sorted(topo.paths)
        ],
        "verdict": dict(verdict) if verdict is not None else None,
    }


def dumps_report(report: Mapping) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: Mapping, path: Union[str, FilePath]) -> None:
    FilePath(path).write_text(dumps_report(report), encoding="utf-8")


def read_report(path: Union[str, FilePath]) -> Dict[str, object]:
    return json.loads(FilePath(path).read_text(encoding="utf-8"))


def report_paths(report: Mapping, graph: PotentialGraph) -> Dict[int, List[Path]]:
    """Rebuild per-commodity :class:`Path` lists from a report."""
    out: Dict[int, List[Path]] = {}
    for entry in report["paths"]:
        s, t = entry["commodity"]
        c = graph.commodity(s, t)
        out[c.id] = [graph.path_from_nodes(p["nodes"], p["kinds"]) for p in entry["paths"]]
    return out


_STYLE = {LinkKind.FIBER: "bold", LinkKind.FSO: "solid", LinkKind.MIRROR: "dashed"}


def render_dot(topo: Topology, graph: PotentialGraph, name: str = "topology") -> str:
    """Graphviz description: fiber links bold, FSO links solid, mirror links dashed."""
    lines = [f"graph {name} {{", "  node [fontsize=10];"]
    used_nodes = set(graph.fso_nodes) | set(topo.leased_nodes)
    for n in graph.nodes:
        if n.id not in used_nodes:
            continue
        shape = "box" if n.is_fso else "circle"
        lines.append(f'  {n.id} [shape={shape}, pos="{n.x:.1f},{n.y:.1f}!"];')
    fibers = sorted({e for ps in topo.paths.values() for p in ps for e in p.links
                     if graph.links[e].kind is LinkKind.FIBER})
    copies = topo.devices.copies if topo.devices else {}
    for e in sorted(set(topo.established_links) | set(fibers)):
        link = graph.links[e]
        attrs = [f"style={_STYLE[link.kind]}"]
        if link.kind is LinkKind.FSO and copies.get(link.pair, 1) > 1:
            attrs.append(f'label="x{copies[link.pair]}"')
        lines.append(f"  {link.p} -- {link.q} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
