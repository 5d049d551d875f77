"""A path that passes the same roof mirror twice.

Three base stations sit around one roof mirror.  The two outer stations
(1400 m apart) are out of range of each other and the middle one is blocked
from both, so every route goes through the mirror.  Going straight
0-3-1 is too long for one mirror stretch, so the best path bounces via
station 2: 0-3-2-3-1, installing two mirrors on the same roof.

    python3 demos/mirror_revisit.py
"""

from fsobackhaul.core import CostWeights, Node, NodeKind
from fsobackhaul.exact import solve_exact
from fsobackhaul.instance import Instance, build_potential_graph, instance_hash
from fsobackhaul.report import build_report, render_dot
from fsobackhaul.sequential import sequential_solve
from fsobackhaul.verify import verify_report

nodes = (
    Node(0, NodeKind.FSO, -700, 0),
    Node(1, NodeKind.FSO, 700, 0),
    Node(2, NodeKind.FSO, 0, 600),
    Node(3, NodeKind.MIRROR, 0, 0),
)
inst = Instance(nodes, nonlos=((0, 2), (1, 2)), K=1, weights=CostWeights(4, 2, 1, 0.01))
graph = build_potential_graph(inst)

for name, solve in (("exact", solve_exact), ("sequential", sequential_solve)):
    topo = solve(inst)
    report = build_report(topo, graph, instance_hash(inst), name)
    verdict = verify_report(graph, report)
    print(f"{name:10s} objective {topo.objective:8.4f}  F={topo.F} M={topo.M} N={topo.N}  verified={verdict.ok}")
    for d, paths in sorted(topo.paths.items()):
        c = graph.commodities[d]
        print(f"    {c.pair}: " + ", ".join(str(p.nodes) for p in paths))

print("\nGraphviz rendering of the exact design:\n")
print(render_dot(solve_exact(inst), graph))
